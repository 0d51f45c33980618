"""Staggered finite-difference grid on a box.

Displacement and velocity live on nodes (Dirichlet nodes pinned to zero), the
magnetic field on faces (normal component zero on the boundary), its curl on
edges (tangential components zero on the boundary) and divergences on cells.
Every axis is either ``dirichlet`` (nodes at ``i h``, ``h = L/(n-1)``) or
``periodic`` (``h = L/n``). A periodic axis with ``n = 1`` gives fields that do
not depend on that coordinate (the 2.5D reduction).

The discrete operators are built from two 1D primitives per axis, a forward
difference ``d`` and an average ``a`` from nodes to midpoints, together with
their exact transposes, so every adjoint relation used by the energy identity
holds to rounding.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .errors import ValidationError

DIRICHLET, PERIODIC = "dirichlet", "periodic"
NODE, MID = 0, 1


@dataclass(frozen=True)
class Grid:
    extents: tuple
    n: tuple
    bc: tuple = (DIRICHLET, DIRICHLET, DIRICHLET)

    def __post_init__(self):
        ext = tuple(float(e) for e in self.extents)
        n = tuple(int(k) for k in self.n)
        bc = tuple(str(b) for b in self.bc)
        if len(ext) != 3 or len(n) != 3 or len(bc) != 3:
            raise ValidationError("grid extents, n and bc need three entries")
        for L, k, b in zip(ext, n, bc):
            if b not in (DIRICHLET, PERIODIC):
                raise ValidationError(f"unknown boundary condition {b!r}")
            if not L > 0:
                raise ValidationError("grid extents must be positive")
            if k < 8 and not (b == PERIODIC and k == 1):
                raise ValidationError("n >= 8 per axis (n = 1 only for a periodic reduced axis)")
        if all(b == PERIODIC for b in bc):
            raise ValidationError("at least one axis must carry the Dirichlet condition")
        object.__setattr__(self, "extents", ext)
        object.__setattr__(self, "n", n)
        object.__setattr__(self, "bc", bc)

    @property
    def h(self) -> tuple:
        return tuple(L / (k - 1) if b == DIRICHLET else L / k for L, k, b in zip(self.extents, self.n, self.bc))

    @property
    def h_min(self) -> float:
        return min(h for h, k in zip(self.h, self.n) if k > 1)

    @property
    def volume(self) -> float:
        """Weight of one grid point in every discrete inner product."""
        return float(np.prod(self.h))

    @property
    def active_axes(self) -> tuple:
        return tuple(a for a in range(3) if self.n[a] > 1)

    def n_mid(self, axis: int) -> int:
        return self.n[axis] - 1 if self.bc[axis] == DIRICHLET else self.n[axis]

    def shape(self, loc: tuple) -> tuple:
        return tuple(self.n[a] if loc[a] == NODE else self.n_mid(a) for a in range(3))

    def coords(self, axis: int, loc: int = NODE) -> np.ndarray:
        h = self.h[axis]
        k = self.n[axis] if loc == NODE else self.n_mid(axis)
        return h * (np.arange(k) + (0.5 if loc == MID else 0.0))

    def mesh(self, loc: tuple = (NODE, NODE, NODE)) -> tuple:
        return np.meshgrid(*(self.coords(a, loc[a]) for a in range(3)), indexing="ij")

    def refined(self) -> "Grid":
        """Halve every active spacing."""
        n = tuple(
            k if k == 1 else (2 * (k - 1) + 1 if b == DIRICHLET else 2 * k) for k, b in zip(self.n, self.bc)
        )
        return Grid(self.extents, n, self.bc)

    def to_dict(self) -> dict:
        return {"extents": list(self.extents), "n": list(self.n), "bc": list(self.bc)}

    @classmethod
    def from_dict(cls, d: dict) -> "Grid":
        return cls(tuple(d["extents"]), tuple(d["n"]), tuple(d.get("bc", (DIRICHLET,) * 3)))


# ---------------------------------------------------------------------------
# 1D primitives along one axis of a 3D array
# ---------------------------------------------------------------------------


def _sl(axis, s, ndim=3):
    idx = [slice(None)] * ndim
    idx[axis] = s
    return tuple(idx)


def _spread(g, axis, sign):
    """``out[i] = g[i-1] + sign * g[i]`` on ``m + 1`` points with zero padding."""
    shape = list(g.shape)
    shape[axis] += 1
    out = np.empty(shape)
    if sign > 0:
        np.add(g[_sl(axis, slice(None, -1))], g[_sl(axis, slice(1, None))], out=out[_sl(axis, slice(1, -1))])
        out[_sl(axis, 0)] = g[_sl(axis, 0)]
    else:
        np.subtract(g[_sl(axis, slice(None, -1))], g[_sl(axis, slice(1, None))], out=out[_sl(axis, slice(1, -1))])
        out[_sl(axis, 0)] = -g[_sl(axis, 0)]
    out[_sl(axis, -1)] = g[_sl(axis, -1)]
    return out


def diff(u, axis, grid: Grid):
    """Forward difference, node -> midpoint."""
    h = grid.h[axis]
    if grid.bc[axis] == PERIODIC:
        return (np.roll(u, -1, axis=axis) - u) / h
    return (u[_sl(axis, slice(1, None))] - u[_sl(axis, slice(None, -1))]) / h


def diff_T(g, axis, grid: Grid):
    """Transpose of ``diff``, midpoint -> node."""
    h = grid.h[axis]
    if grid.bc[axis] == PERIODIC:
        return (np.roll(g, 1, axis=axis) - g) / h
    return _spread(g, axis, -1) / h


def avg(u, axis, grid: Grid):
    """Two-point average, node -> midpoint."""
    if grid.bc[axis] == PERIODIC:
        return 0.5 * (np.roll(u, -1, axis=axis) + u)
    return 0.5 * (u[_sl(axis, slice(1, None))] + u[_sl(axis, slice(None, -1))])


def avg_T(g, axis, grid: Grid):
    if grid.bc[axis] == PERIODIC:
        return 0.5 * (np.roll(g, 1, axis=axis) + g)
    return 0.5 * _spread(g, axis, 1)


def _avg_others(u, axis, grid, transpose=False):
    f = avg_T if transpose else avg
    for b in range(3):
        if b != axis:
            u = f(u, b, grid)
    return u


# ---------------------------------------------------------------------------
# Field operators
# ---------------------------------------------------------------------------


def _boundary_mask(grid: Grid, loc: tuple, axes) -> np.ndarray:
    m = np.ones(grid.shape(loc), dtype=bool)
    for a in axes:
        if grid.bc[a] == DIRICHLET and loc[a] == NODE:
            m[_sl(a, 0)] = False
            m[_sl(a, -1)] = False
    return m


def face_loc(c: int) -> tuple:
    return tuple(NODE if a == c else MID for a in range(3))


def edge_loc(c: int) -> tuple:
    return tuple(MID if a == c else NODE for a in range(3))


def _cross(w, B):
    """Pointwise ``w x B`` for a node vector field and a constant vector."""
    bx, by, bz = (float(b) for b in B)
    return np.stack([w[1] * bz - w[2] * by, w[2] * bx - w[0] * bz, w[0] * by - w[1] * bx])


CELL = (MID, MID, MID)
NODES = (NODE, NODE, NODE)


class Operators:
    """Discrete Lamé, curl, coupling and divergence operators on one grid.

    Node vector fields are arrays ``(3, nx, ny, nz)``; face and edge fields are
    tuples of three arrays with the staggered shapes of each component.
    """

    def __init__(self, grid: Grid):
        self.grid = grid
        self.V = grid.volume

    @cached_property
    def node_mask(self) -> np.ndarray:
        return _boundary_mask(self.grid, NODES, range(3))

    @cached_property
    def face_masks(self) -> tuple:
        return tuple(_boundary_mask(self.grid, face_loc(c), [c]) for c in range(3))

    @cached_property
    def edge_masks(self) -> tuple:
        return tuple(_boundary_mask(self.grid, edge_loc(c), [a for a in range(3) if a != c]) for c in range(3))

    # -- shapes / flattening ----------------------------------------------
    def zeros_nodes(self) -> np.ndarray:
        return np.zeros((3, *self.grid.n))

    def zeros_faces(self) -> tuple:
        return tuple(np.zeros(self.grid.shape(face_loc(c))) for c in range(3))

    @cached_property
    def face_sizes(self) -> tuple:
        return tuple(int(np.prod(self.grid.shape(face_loc(c)))) for c in range(3))

    def flatten_faces(self, h) -> np.ndarray:
        return np.concatenate([c.ravel() for c in h])

    def unflatten_faces(self, x) -> tuple:
        out, k = [], 0
        for c, size in enumerate(self.face_sizes):
            out.append(x[k: k + size].reshape(self.grid.shape(face_loc(c))))
            k += size
        return tuple(out)

    # -- inner products ---------------------------------------------------
    def dot(self, a, b) -> float:
        if isinstance(a, tuple):
            return self.V * float(sum(np.vdot(x, y).real for x, y in zip(a, b)))
        return self.V * float(np.vdot(a, b).real)

    def norm2(self, a) -> float:
        return self.dot(a, a)

    # -- node operators ---------------------------------------------------
    def mask_nodes(self, v) -> np.ndarray:
        return v * self.node_mask

    def grad_components(self, v) -> list:
        """All forward differences ``d_a v_c`` (the discrete gradient)."""
        return [diff(v[c], a, self.grid) for c in range(3) for a in self.grid.active_axes]

    def div_cell(self, v) -> np.ndarray:
        """Cell-centred divergence of a node vector field."""
        g = self.grid
        return sum(diff(_avg_others(v[a], a, g), a, g) for a in range(3))

    def div_cell_T(self, q) -> np.ndarray:
        g = self.grid
        return np.stack([_avg_others(diff_T(q, a, g), a, g, transpose=True) for a in range(3)])

    def neg_laplacian(self, v) -> np.ndarray:
        g = self.grid
        out = np.zeros_like(v)
        for c in range(3):
            for a in g.active_axes:
                out[c] += diff_T(diff(v[c], a, g), a, g)
        return out

    def elastic(self, v, lam: float, mu: float) -> np.ndarray:
        """``A v``: the symmetric positive form whose negative is the Lamé operator."""
        v = self.mask_nodes(v)
        out = mu * self.neg_laplacian(v) + (lam + mu) * self.div_cell_T(self.div_cell(v))
        return self.mask_nodes(out)

    def shear_energy(self, v, mu) -> float:
        return 0.5 * mu * sum(self.norm2(x) for x in self.grad_components(v))

    def compressional_energy(self, v, lam, mu) -> float:
        return 0.5 * (lam + mu) * self.norm2(self.div_cell(v))

    # -- curl and coupling ------------------------------------------------
    def _dn(self, g, axis):
        # midpoint -> node difference
        return -diff_T(g, axis, self.grid)

    def _dn_T(self, e, axis):
        return -diff(e, axis, self.grid)

    def curl(self, h) -> tuple:
        """Face -> edge curl with the tangential boundary components removed."""
        hx, hy, hz = (h[c] * self.face_masks[c] for c in range(3))
        ex = self._dn(hz, 1) - self._dn(hy, 2)
        ey = self._dn(hx, 2) - self._dn(hz, 0)
        ez = self._dn(hy, 0) - self._dn(hx, 1)
        return tuple(e * m for e, m in zip((ex, ey, ez), self.edge_masks))

    def curl_T(self, e) -> tuple:
        ex, ey, ez = (e[c] * self.edge_masks[c] for c in range(3))
        hx = self._dn_T(ey, 2) - self._dn_T(ez, 1)
        hy = self._dn_T(ez, 0) - self._dn_T(ex, 2)
        hz = self._dn_T(ex, 1) - self._dn_T(ey, 0)
        return tuple(x * m for x, m in zip((hx, hy, hz), self.face_masks))

    def couple(self, w, B) -> tuple:
        """``S w``: ``w x B`` averaged from nodes to edges."""
        w = self.mask_nodes(w)
        wxB = _cross(w, B)
        return tuple(avg(wxB[c], c, self.grid) * self.edge_masks[c] for c in range(3))

    def couple_T(self, e, B) -> np.ndarray:
        g = np.stack([avg_T(e[c] * self.edge_masks[c], c, self.grid) for c in range(3)])
        return self.mask_nodes(-_cross(g, B))

    def div_faces(self, h) -> np.ndarray:
        g = self.grid
        return sum(diff(h[c] * self.face_masks[c], c, g) for c in range(3))

    def div_faces_T(self, q) -> tuple:
        return tuple(diff_T(q, c, self.grid) * self.face_masks[c] for c in range(3))

    # -- centred node curl (diagnostics and observability) ----------------
    def node_curl(self, f) -> np.ndarray:
        """Centred-difference curl of a node vector field, zero on Dirichlet boundary nodes."""
        g = self.grid

        def dc(u, a):
            if g.n[a] == 1:
                return np.zeros_like(u)
            if g.bc[a] == PERIODIC:
                return (np.roll(u, -1, axis=a) - np.roll(u, 1, axis=a)) / (2 * g.h[a])
            out = np.zeros_like(u)
            out[_sl(a, slice(1, -1))] = (u[_sl(a, slice(2, None))] - u[_sl(a, slice(None, -2))]) / (2 * g.h[a])
            return out

        c = np.stack([dc(f[2], 1) - dc(f[1], 2), dc(f[0], 2) - dc(f[2], 0), dc(f[1], 0) - dc(f[0], 1)])
        return self.mask_nodes(c)

    def spectral_radius_bound(self, lam, mu) -> float:
        """Upper bound on the largest eigenvalue of ``A`` (Gershgorin on the 1D symbols)."""
        s = sum(4.0 / self.grid.h[a] ** 2 for a in self.grid.active_axes)
        return (mu + abs(lam + mu)) * s

    # -- spectral preconditioner -------------------------------------------
    def _axis_symbols(self, c: int) -> list:
        """1D eigenvalues of the face Laplacian for component ``c`` along each axis."""
        g = self.grid
        out = []
        for a in range(3):
            n, h = g.n[a], g.h[a]
            if n == 1:
                out.append(("none", np.zeros(1)))
            elif g.bc[a] == PERIODIC:
                k = np.arange(n)
                out.append(("fft", (2.0 / h * np.sin(np.pi * k / n)) ** 2))
            elif a == c:
                k = np.arange(1, n - 1)
                out.append(("dst", (2.0 / h * np.sin(np.pi * k / (2 * (n - 1)))) ** 2))
            else:
                m = n - 1
                k = np.arange(m)
                out.append(("dct", (2.0 / h * np.sin(np.pi * k / (2 * m))) ** 2))
        return out

    def face_shifted_inverse(self, c1: float):
        """Apply ``(I + c1 L)^{-1}`` with ``L`` the componentwise face Laplacian (diagonal in sine/cosine/Fourier modes).

        ``L`` agrees with ``C^T C`` on divergence-free fields, which makes this
        an effective preconditioner for the implicit magnetic solve.
        """
        from scipy import fft

        comps = []
        for c in range(3):
            syms = self._axis_symbols(c)
            lam = np.zeros([len(s[1]) for s in syms])
            for a, (_, s) in enumerate(syms):
                shape = [1, 1, 1]
                shape[a] = len(s)
                lam = lam + s.reshape(shape)
            comps.append((syms, 1.0 / (1.0 + c1 * lam)))

        def apply(h):
            out = []
            for c, (syms, inv) in enumerate(comps):
                x = h[c]
                interior = tuple(slice(1, -1) if syms[a][0] == "dst" else slice(None) for a in range(3))
                y = x[interior]
                for a, (kind, _) in enumerate(syms):
                    if kind == "dst":
                        y = fft.dst(y, type=1, axis=a, norm="ortho")
                    elif kind == "dct":
                        y = fft.dct(y, type=2, axis=a, norm="ortho")
                per = [a for a, s in enumerate(syms) if s[0] == "fft"]
                if per:
                    y = fft.fftn(y, axes=per)
                y = y * inv
                if per:
                    y = fft.ifftn(y, axes=per).real
                for a, (kind, _) in enumerate(syms):
                    if kind == "dst":
                        y = fft.idst(y, type=1, axis=a, norm="ortho")
                    elif kind == "dct":
                        y = fft.idct(y, type=2, axis=a, norm="ortho")
                z = np.zeros_like(x)
                z[interior] = y
                out.append(z * self.face_masks[c])
            return tuple(out)

        return apply

    def curl_cell(self, u) -> np.ndarray:
        """Cell-centred curl of a node vector field; annihilates ``div_cell_T`` exactly."""
        g = self.grid

        def term(comp, along):
            # d_along of u_comp averaged over the two other axes
            f = u[comp]
            for b in range(3):
                if b != along:
                    f = avg(f, b, g)
            return diff(f, along, g)

        return np.stack([term(2, 1) - term(1, 2), term(0, 2) - term(2, 0), term(1, 0) - term(0, 1)])
