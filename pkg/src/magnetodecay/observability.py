"""Negative Sobolev norms and the observability functional of the Lamé flow.

The ``H^{-1}`` norm is the dual of the discrete ``H^1_0`` norm: with
``lambda`` the eigenvalues of the discrete Laplacian (Dirichlet in space on
interior nodes, Fourier on periodic axes, and by default Dirichlet in time over
the window), ``|f|^2_{H^-1} = V dt sum |f_hat|^2 / (1 + lambda)``. The
Dirichlet-in-time choice makes the norm exactly non-decreasing in the window
length.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy import fft

from .errors import ValidationError
from .grid import DIRICHLET, PERIODIC, Grid, Operators
from .solver import FieldState, MagnetoSolver

TIME_MODES = ("dirichlet", "periodic", "space_only")


def _space_transform(f: np.ndarray, grid: Grid, first_axis: int) -> tuple[np.ndarray, np.ndarray]:
    """Orthonormal spectral transform over the three spatial axes starting at ``first_axis``.

    Returns the coefficients and the matching discrete Laplacian eigenvalues.
    """
    lam = np.zeros([1, 1, 1])
    per = []
    for a in range(3):
        ax = first_axis + a
        n, h = grid.n[a], grid.h[a]
        shape = [1, 1, 1]
        if n == 1:
            continue
        if grid.bc[a] == DIRICHLET:
            idx = [slice(None)] * f.ndim
            idx[ax] = slice(1, -1)
            f = fft.dst(f[tuple(idx)], type=1, axis=ax, norm="ortho")
            k = np.arange(1, n - 1)
            s = (2.0 / h * np.sin(np.pi * k / (2 * (n - 1)))) ** 2
        else:
            per.append(ax)
            k = np.arange(n)
            s = (2.0 / h * np.sin(np.pi * k / n)) ** 2
        shape[a] = len(s)
        lam = lam + s.reshape(shape)
    if per:
        f = fft.fftn(f, axes=per, norm="ortho")
    return f, lam


def dirichlet_eigenvalues(grid: Grid) -> np.ndarray:
    _, lam = _space_transform(np.zeros((3, *grid.n)), grid, 1)
    return lam


def hminus1_space(f, grid: Grid) -> float:
    """``|f|^2_{H^-1(Omega)}`` of a scalar ``(nx, ny, nz)`` or vector ``(3, nx, ny, nz)`` node field."""
    f = np.asarray(f, dtype=float)
    if f.ndim == 3:
        f = f[None]
    fh, lam = _space_transform(f, grid, 1)
    return grid.volume * float(np.sum(np.abs(fh) ** 2 / (1.0 + lam[None])))


def hminus1_norm(f, grid: Grid, dt: float, time_mode: str = "dirichlet") -> float:
    """Squared space-time ``H^{-1}`` norm of samples ``f[n] = f(n dt)``, ``n = 0..Nt``.

    ``f`` has shape ``(Nt+1, nx, ny, nz)`` or ``(Nt+1, 3, nx, ny, nz)``; the
    window is ``(0, Nt dt)``. ``time_mode``: ``dirichlet`` (test functions
    vanish at both ends, uses samples ``1..Nt-1``), ``periodic`` (window
    periodized, samples ``0..Nt-1``) or ``space_only`` (``L^2_t H^{-1}_x``).
    """
    if time_mode not in TIME_MODES:
        raise ValidationError(f"time_mode must be one of {TIME_MODES}")
    f = np.asarray(f, dtype=float)
    if f.ndim == 4:
        f = f[:, None]
    if f.ndim != 5:
        raise ValidationError("f must be sampled as (time, [3,] nx, ny, nz)")
    nt = f.shape[0] - 1
    if nt < 1:
        return 0.0
    fh, lam = _space_transform(f, grid, 2)
    lam = lam[None, None]
    if time_mode == "dirichlet":
        if nt < 2:
            return 0.0
        g = fft.dst(fh[1:nt], type=1, axis=0, norm="ortho")
        m = np.arange(1, nt)
        lt = (2.0 / dt * np.sin(np.pi * m / (2 * nt))) ** 2
    elif time_mode == "periodic":
        g = fft.fft(fh[:nt], axis=0, norm="ortho")
        m = np.arange(nt)
        lt = (2.0 / dt * np.sin(np.pi * m / nt)) ** 2
    else:
        g = fh[:nt]
        lt = np.zeros(nt)
    lt = lt.reshape(-1, 1, 1, 1, 1)
    return grid.volume * dt * float(np.sum(np.abs(g) ** 2 / (1.0 + lam + lt)))


# ---------------------------------------------------------------------------
# Observability functional
# ---------------------------------------------------------------------------


def curl_of_cross(ops: Operators, w, B) -> np.ndarray:
    """``rot(w x B)`` at nodes with centred differences."""
    bx, by, bz = (float(b) for b in B)
    wxB = np.stack([w[1] * bz - w[2] * by, w[2] * bx - w[0] * bz, w[0] * by - w[1] * bx])
    return ops.node_curl(wxB)


@dataclass
class LameTrajectory:
    """Samples of ``rot(d_t^{l+1} u x B)`` for ``l = 0..N`` along a pure Lamé run."""

    grid: Grid
    dt: float
    B: tuple
    forcing: np.ndarray  # (N+1, Nt+1, 3, nx, ny, nz)
    u0: np.ndarray
    u1: np.ndarray

    @property
    def N(self) -> int:
        return self.forcing.shape[0] - 1

    @property
    def T(self) -> float:
        return (self.forcing.shape[1] - 1) * self.dt


def lame_trajectory(solver: MagnetoSolver, u0, u1, N: int, T: float) -> LameTrajectory:
    """Run the differentiated Lamé trajectories needed for ``Q^N`` up to time ``T``."""
    if N < 0:
        raise ValidationError("N must be non-negative")
    ops = solver.ops
    B = solver.material.B
    u0 = ops.mask_nodes(np.asarray(u0, dtype=float))
    u1 = ops.mask_nodes(np.asarray(u1, dtype=float))
    nt = int(round(T / solver.dt))
    data = [(u0, u1)]
    for _ in range(N):
        u, w = data[-1]
        data.append((w, -solver.A(u)))
    forcing = np.zeros((N + 1, nt + 1, 3, *solver.grid.n))
    for l, (u, w) in enumerate(data):
        s = FieldState(0.0, u - 0.5 * solver.dt * w - 0.125 * solver.dt**2 * solver.A(u), w, ops.zeros_faces())
        s.v = ops.mask_nodes(s.v)
        for n in range(nt + 1):
            forcing[l, n] = curl_of_cross(ops, s.vt, B)
            if n < nt:
                s = solver.step_lame(s)
    return LameTrajectory(solver.grid, solver.dt, tuple(B), forcing, u0, u1)


@dataclass
class ObservabilityReport:
    Q: float
    Q_terms: list
    lhs: float
    rhs_remainder: float
    ratio: float
    T: float
    N: int
    time_mode: str
    notes: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "Q": self.Q,
            "Q_terms": list(self.Q_terms),
            "lhs": self.lhs,
            "rhs_remainder": self.rhs_remainder,
            "ratio": self.ratio,
            "T": self.T,
            "N": self.N,
            "time_mode": self.time_mode,
            "notes": list(self.notes),
        }


def observability_functional(
    traj: LameTrajectory, T: Optional[float] = None, N: Optional[int] = None, time_mode: str = "dirichlet"
) -> ObservabilityReport:
    """``Q^N_T = sum_{l<=N} |rot(d_t^{l+1} u x B)|^2_{H^-1((0,T) x Omega)}`` with both sides of the inequality.

    ``lhs = |u0|^2_{H^1_0} + |u1|^2`` and
    ``rhs_remainder = |u0|^2 + |u1|^2_{H^-1}``; ``ratio = lhs / (Q + rhs_remainder)``.
    """
    N = traj.N if N is None else int(N)
    if not 0 <= N <= traj.N:
        raise ValidationError(f"N must lie in [0, {traj.N}]")
    nt = traj.forcing.shape[1] - 1 if T is None else int(round(T / traj.dt))
    if not 0 <= nt <= traj.forcing.shape[1] - 1:
        raise ValidationError("T exceeds the stored trajectory")
    grid = traj.grid
    ops = Operators(grid)
    terms = [hminus1_norm(traj.forcing[l, : nt + 1], grid, traj.dt, time_mode) for l in range(N + 1)]
    Q = float(sum(terms))
    lhs = sum(ops.norm2(x) for x in ops.grad_components(traj.u0)) + ops.norm2(traj.u1)
    rhs = ops.norm2(traj.u0) + hminus1_space(traj.u1, grid)
    denom = Q + rhs
    ratio = lhs / denom if denom > 0 else (0.0 if lhs == 0 else math.inf)
    return ObservabilityReport(Q, terms, lhs, rhs, ratio, nt * traj.dt, N, time_mode)
