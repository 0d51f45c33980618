"""Smooth domains given by an implicit function ``phi`` with ``Omega = {phi < 0}``.

The engine needs values, gradients and Hessians of ``phi`` along lines: Newton
intersection, contact orders of tangent lines and the tracing of shadow curves
(boundary curves on which the outward normal is orthogonal to a direction).

Named analytic families are built symbolically with sympy and lambdified, so
they carry exact derivatives and are picklable through their spec.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
import sympy as sp
from scipy.optimize import brentq

from .errors import NoConvergence, NoHit, NotTangent, ValidationError

INFINITE_ORDER = math.inf

_X, _Y, _Z = sp.symbols("x y z", real=True)


def unit(v) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    n = np.linalg.norm(v)
    if n == 0.0:
        raise ValidationError("zero vector cannot be normalized")
    return v / n


def orthonormal_complement(b) -> tuple[np.ndarray, np.ndarray]:
    """Two unit vectors completing ``b`` to a right-handed orthonormal frame."""
    b = unit(b)
    trial = np.eye(3)[int(np.argmin(np.abs(b)))]
    e1 = unit(trial - np.dot(trial, b) * b)
    e2 = np.cross(b, e1)
    return e1, e2


def rotation_matrix(axis, angle: float) -> np.ndarray:
    """Rodrigues rotation about ``axis`` by ``angle`` radians."""
    k = unit(axis)
    kx = np.array([[0.0, -k[2], k[1]], [k[2], 0.0, -k[0]], [-k[1], k[0], 0.0]])
    return np.eye(3) + math.sin(angle) * kx + (1.0 - math.cos(angle)) * (kx @ kx)


# ---------------------------------------------------------------------------
# Domain specs (scenario-level description of a family + parameters)
# ---------------------------------------------------------------------------

FAMILIES = ("ball", "ellipsoid", "superquadric", "perturbed_ball", "implicit")


@dataclass(frozen=True)
class DomainSpec:
    family: str
    params: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"family": self.family, "params": _plain(self.params)}

    @classmethod
    def from_dict(cls, d: dict) -> "DomainSpec":
        if "family" not in d:
            raise ValidationError("domain spec needs a 'family' key")
        if d["family"] not in FAMILIES:
            raise ValidationError(f"unknown domain family {d['family']!r}; expected one of {FAMILIES}")
        return cls(d["family"], dict(d.get("params", {})))


def _plain(obj):
    if isinstance(obj, dict):
        return {k: _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple, np.ndarray)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.generic):
        return obj.item()
    return obj


def solid_harmonic(l: int, m: int) -> sp.Expr:
    """Real solid harmonic ``r^l P_l^{|m|}(cos th) cos(m ph)`` (``sin`` for m < 0) as a polynomial."""
    if l < 0 or abs(m) > l:
        raise ValidationError(f"invalid harmonic degree/order ({l}, {m})")
    u = sp.Symbol("u")
    r = sp.sqrt(_X**2 + _Y**2 + _Z**2)
    radial = sp.diff(sp.legendre(l, u), u, abs(m))
    poly_zr = sp.expand(sp.simplify(r ** (l - abs(m)) * radial.subs(u, _Z / r)))
    planar = sp.expand((_X + sp.I * _Y) ** abs(m))
    azim = sp.re(planar) if m >= 0 else sp.im(planar)
    return sp.expand(sp.simplify(poly_zr * azim))


def _family_expression(spec: DomainSpec) -> tuple[sp.Expr, float]:
    """Return (phi in local coordinates, radius bound) for a family."""
    p = spec.params
    if spec.family == "ball":
        r = float(p.get("radius", 1.0))
        if r <= 0:
            raise ValidationError("ball radius must be positive")
        return _X**2 + _Y**2 + _Z**2 - r**2, r
    if spec.family == "ellipsoid":
        a, b, c = (float(v) for v in p.get("axes", (1.0, 1.0, 1.0)))
        if min(a, b, c) <= 0:
            raise ValidationError("ellipsoid axes must be positive")
        return (_X / a) ** 2 + (_Y / b) ** 2 + (_Z / c) ** 2 - 1, max(a, b, c)
    if spec.family == "superquadric":
        exps = [int(v) for v in p.get("exponents", (1, 1, 1))]
        a = [float(v) for v in p.get("axes", (1.0, 1.0, 1.0))]
        if min(exps) < 1 or min(a) <= 0:
            raise ValidationError("superquadric needs integer exponents >= 1 and positive axes")
        expr = sum((s / ai) ** (2 * e) for s, ai, e in zip((_X, _Y, _Z), a, exps)) - 1
        return expr, max(a)
    if spec.family == "perturbed_ball":
        r = float(p.get("radius", 1.0))
        eps = float(p.get("eps", 0.0))
        if "bump" in p:
            bump = sp.sympify(p["bump"], locals={"x": _X, "y": _Y, "z": _Z})
        else:
            bump = solid_harmonic(int(p.get("l", 2)), int(p.get("m", 0)))
        return _X**2 + _Y**2 + _Z**2 - r**2 - eps * bump, r * (1.0 + abs(eps)) * 2.0
    if spec.family == "implicit":
        expr = sp.sympify(p["expression"], locals={"x": _X, "y": _Y, "z": _Z})
        return expr, float(p.get("extent", 2.0))
    raise ValidationError(f"unknown domain family {spec.family!r}")


# ---------------------------------------------------------------------------
# Domain
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class BoundaryPoint:
    y: np.ndarray
    n: np.ndarray

    def to_dict(self) -> dict:
        return {"y": self.y.tolist(), "n": self.n.tolist()}


class Domain:
    """Bounded smooth region ``{phi < 0}`` with derivative access.

    ``implicit_fn`` maps an array ``(..., 3)`` to ``(...)``. ``gradient`` and
    ``hessian`` are optional; central differences are used when absent.
    """

    def __init__(
        self,
        implicit_fn: Callable[[np.ndarray], np.ndarray],
        bounding_box: Sequence[Sequence[float]],
        smoothness_order: int = 8,
        gradient: Optional[Callable] = None,
        hessian: Optional[Callable] = None,
        center=None,
        spec: Optional[DomainSpec] = None,
        tol_surface_rel: float = 1e-10,
        tol_angle: float = 1e-8,
        tol_plane_rel: float = 1e-6,
    ):
        if smoothness_order < 4:
            raise ValidationError("smoothness_order must be >= 4")
        box = np.asarray(bounding_box, dtype=float)
        if box.shape != (2, 3) or np.any(box[1] <= box[0]):
            raise ValidationError("bounding_box must be [[xmin,ymin,zmin],[xmax,ymax,zmax]]")
        self._phi = implicit_fn
        self._grad = gradient
        self._hess = hessian
        self.bounding_box = box
        self.smoothness_order = int(smoothness_order)
        self.center = np.asarray(center if center is not None else box.mean(axis=0), dtype=float)
        self.spec = spec
        self.diam = float(np.linalg.norm(box[1] - box[0]))
        self.tol_surface = tol_surface_rel * self.diam
        self.tol_angle = tol_angle
        self.tol_plane = tol_plane_rel * self.diam
        self._tol_rel = (tol_surface_rel, tol_angle, tol_plane_rel)

    # -- construction -----------------------------------------------------
    @classmethod
    def from_expression(cls, expr, bounding_box, center=None, spec=None, **kw) -> "Domain":
        if isinstance(expr, str):
            expr = sp.sympify(expr, locals={"x": _X, "y": _Y, "z": _Z})
        syms = (_X, _Y, _Z)
        grad = [sp.diff(expr, s) for s in syms]
        hess = [[sp.diff(g, s) for s in syms] for g in grad]
        f = sp.lambdify(syms, expr, "numpy")
        fg = [sp.lambdify(syms, g, "numpy") for g in grad]
        fh = [[sp.lambdify(syms, h, "numpy") for h in row] for row in hess]

        def value(p):
            p = np.asarray(p)
            return np.broadcast_to(f(p[..., 0], p[..., 1], p[..., 2]), p.shape[:-1]) * 1.0

        def gradient(p):
            p = np.asarray(p)
            comps = [np.broadcast_to(g(p[..., 0], p[..., 1], p[..., 2]), p.shape[:-1]) for g in fg]
            return np.stack(comps, axis=-1).astype(p.dtype if np.iscomplexobj(p) else float)

        def hessian(p):
            p = np.asarray(p)
            rows = [
                np.stack([np.broadcast_to(h(p[..., 0], p[..., 1], p[..., 2]), p.shape[:-1]) for h in row], axis=-1)
                for row in fh
            ]
            return np.stack(rows, axis=-2).astype(float)

        dom = cls(value, bounding_box, gradient=gradient, hessian=hessian, center=center, spec=spec, **kw)
        dom.expression = expr
        return dom

    @classmethod
    def from_spec(cls, spec: DomainSpec | dict, **kw) -> "Domain":
        if isinstance(spec, dict):
            spec = DomainSpec.from_dict(spec)
        expr, rbound = _family_expression(spec)
        p = spec.params
        center = np.asarray(p.get("center", (0.0, 0.0, 0.0)), dtype=float)
        rot = np.eye(3)
        if "rotation_axis" in p:
            rot = rotation_matrix(p["rotation_axis"], float(p.get("rotation_angle", 0.0)))
        # local coordinates q = R^T (y - c)
        if not np.allclose(rot, np.eye(3)) or np.any(center != 0):
            local = sp.Matrix(rot.T.tolist()) * sp.Matrix([_X - center[0], _Y - center[1], _Z - center[2]])
            expr = expr.subs({_X: local[0], _Y: local[1], _Z: local[2]}, simultaneous=True)
        half = 1.25 * rbound
        if "extent" in p:
            half = float(p["extent"])
        box = [center - half, center + half]
        kw.setdefault("smoothness_order", int(p.get("smoothness_order", 8)))
        return cls.from_expression(expr, box, center=center, spec=spec, **kw)

    def __reduce__(self):
        if self.spec is None:
            raise TypeError("only spec-backed domains can be pickled")
        s, a, pl = self._tol_rel
        return (_rebuild_domain, (self.spec.to_dict(), self.smoothness_order, s, a, pl))

    # -- evaluation -------------------------------------------------------
    def value(self, p) -> np.ndarray:
        return self._phi(np.asarray(p))

    def gradient(self, p) -> np.ndarray:
        if self._grad is not None:
            return self._grad(np.asarray(p))
        p = np.asarray(p, dtype=float)
        h = 1e-6 * self.diam
        cols = [(self.value(p + h * e) - self.value(p - h * e)) / (2 * h) for e in np.eye(3)]
        return np.stack(cols, axis=-1)

    def hessian(self, p) -> np.ndarray:
        if self._hess is not None:
            return self._hess(np.asarray(p))
        p = np.asarray(p, dtype=float)
        h = 1e-4 * self.diam
        rows = [(self.gradient(p + h * e) - self.gradient(p - h * e)) / (2 * h) for e in np.eye(3)]
        return np.stack(rows, axis=-2)

    def normal(self, p) -> np.ndarray:
        g = self.gradient(p)
        return g / np.linalg.norm(g, axis=-1, keepdims=True)

    def distance_estimate(self, p) -> np.ndarray:
        """First-order distance to the zero set, ``|phi| / |grad phi|``."""
        with np.errstate(divide="ignore"):
            return np.abs(self.value(p)) / np.linalg.norm(self.gradient(p), axis=-1)

    def contains(self, p) -> np.ndarray:
        return self.value(p) < 0

    def boundary_point(self, y) -> BoundaryPoint:
        y = np.asarray(y, dtype=float)
        return BoundaryPoint(y, self.normal(y))

    # -- validation -------------------------------------------------------
    def validate(self, n_samples: int = 400, rng: Optional[np.random.Generator] = None) -> list[str]:
        """Sampled invariant checks. Raises on hard violations, returns warnings."""
        rng = rng or np.random.default_rng(0)
        lo, hi = self.bounding_box
        if not self.value(self.center) < 0:
            raise ValidationError("domain center is not interior (phi(center) >= 0)")
        # phi > 0 on the faces of the bounding box
        pts = rng.uniform(lo, hi, size=(n_samples, 3))
        axis = rng.integers(0, 3, n_samples)
        side = rng.integers(0, 2, n_samples)
        pts[np.arange(n_samples), axis] = np.where(side == 0, lo[axis], hi[axis])
        if np.any(self.value(pts) <= 0):
            raise ValidationError("domain is not bounded by its bounding box (phi <= 0 on the box)")
        # nonvanishing gradient on the surface
        dirs = fibonacci_sphere(max(16, n_samples // 4))
        warn = []
        for u in dirs:
            bp, _ = first_boundary_hit(self, self.center, u)
            g = np.linalg.norm(self.gradient(bp.y))
            if not g > 1e-12:
                raise ValidationError(f"grad phi vanishes on the boundary near {bp.y.tolist()}")
            e1, e2 = orthonormal_complement(bp.n)
            for d in (e1, e2, unit(e1 + e2)):
                if contact_order(self, bp, d) == INFINITE_ORDER:
                    warn.append(f"no finite contact order up to {self.smoothness_order} at {bp.y.tolist()}")
        for w in warn:
            warnings.warn(w)
        return warn


def _rebuild_domain(spec_dict, smoothness_order, s, a, pl):
    return Domain.from_spec(
        DomainSpec.from_dict(spec_dict),
        smoothness_order=smoothness_order,
        tol_surface_rel=s,
        tol_angle=a,
        tol_plane_rel=pl,
    )


def fibonacci_sphere(n: int) -> np.ndarray:
    i = np.arange(n) + 0.5
    z = 1.0 - 2.0 * i / n
    r = np.sqrt(1.0 - z**2)
    th = math.pi * (1.0 + 5**0.5) * i
    return np.stack([r * np.cos(th), r * np.sin(th), z], axis=-1)


# ---------------------------------------------------------------------------
# Operations
# ---------------------------------------------------------------------------


def project_to_boundary(domain: Domain, y0, max_iter: int = 60) -> BoundaryPoint:
    """Newton iteration along the gradient onto ``{phi = 0}``."""
    y = np.asarray(y0, dtype=float).copy()
    tol = 1e-3 * domain.tol_surface
    for _ in range(max_iter):
        f = float(domain.value(y))
        g = domain.gradient(y)
        gg = float(np.dot(g, g))
        if gg == 0.0:
            raise NoConvergence("gradient vanished during boundary projection")
        step = f / gg * g
        y = y - step
        if abs(f) / math.sqrt(gg) <= tol or np.linalg.norm(step) <= 1e-16 * domain.diam:
            break
    else:
        raise NoConvergence(f"projection did not converge from {np.asarray(y0).tolist()}")
    if domain.distance_estimate(y) > domain.tol_surface:
        raise NoConvergence(f"projection stalled at {y.tolist()}")
    return domain.boundary_point(y)


def _box_exit(box: np.ndarray, y: np.ndarray, d: np.ndarray) -> float:
    with np.errstate(divide="ignore", over="ignore", invalid="ignore"):
        t1 = (box[0] - y) / d
        t2 = (box[1] - y) / d
    tmax = np.where(d != 0, np.maximum(t1, t2), np.inf)
    return float(np.min(tmax))


_GEOM = np.geomspace(1e-10, 2e-2, 28)
_LIN = np.linspace(0.0, 1.0, 193)[1:]


def first_boundary_hit(domain: Domain, y, d) -> tuple[BoundaryPoint, float]:
    """First crossing of ``y + s d`` (s > 0) with the boundary.

    ``y`` may be interior or on the boundary with ``d`` pointing inward.
    """
    y = np.asarray(y, dtype=float)
    d = np.asarray(d, dtype=float)
    g0 = domain.gradient(y)
    f0 = float(domain.value(y))
    gnorm = float(np.linalg.norm(g0))
    on_boundary = abs(f0) <= 1e-8 * domain.diam * gnorm
    if not on_boundary and f0 >= 0:
        raise ValidationError(f"ray start {y.tolist()} is not interior")
    s_max = _box_exit(domain.bounding_box, y, d)
    if not np.isfinite(s_max) or s_max <= 0:
        raise NoHit("ray starts outside the bounding box")
    ss = np.concatenate([_GEOM * domain.diam, _LIN * s_max])
    ss = np.unique(ss[ss < s_max])
    vals = domain.value(y[None, :] + ss[:, None] * d[None, :])
    if on_boundary:
        slope = float(np.dot(g0, d))
        if slope >= 0:
            raise NoHit("direction does not point into the domain")
        neg_prev = np.concatenate([[True], vals[:-1] < 0])
    else:
        neg_prev = np.concatenate([[f0 < 0], vals[:-1] < 0])
    idx = np.flatnonzero((vals >= 0) & neg_prev)
    if idx.size == 0:
        raise NoHit(f"no sign change along ray from {y.tolist()} in direction {d.tolist()}")
    k = int(idx[0])
    a = 0.0 if k == 0 else float(ss[k - 1])
    b = float(ss[k])

    def g(s):
        return float(domain.value(y + s * d))

    if k == 0 and on_boundary:
        # grazing chord shorter than the first sample: bracket away from s = 0
        a = b
        while g(a) >= 0:
            a *= 0.5
            if a < 1e-15 * domain.diam:
                raise NoHit("grazing ray: chord below resolution")
    s = brentq(g, a, b, xtol=1e-15 * domain.diam, rtol=4 * np.finfo(float).eps, maxiter=200)
    for _ in range(3):
        p = y + s * d
        fs = float(domain.value(p))
        ds = float(np.dot(domain.gradient(p), d))
        if ds == 0 or fs == 0:
            break
        s_new = s - fs / ds
        if not a <= s_new <= b:
            break
        s = s_new
    p = y + s * d
    return domain.boundary_point(p), float(s)


def line_taylor(domain: Domain, y, d, degree: Optional[int] = None, half_width: Optional[float] = None) -> np.ndarray:
    """Scaled Taylor coefficients ``c_k = g^(k)(0) eps^k / k!`` of ``g(s) = phi(y + s d)``.

    Obtained from a Chebyshev least-squares fit on ``[-eps, eps]``: a
    high-order finite-difference scheme on a wide stencil. The default degree
    is twice the smoothness order, so terms just beyond that order are
    resolved instead of aliasing into the low coefficients.
    """
    degree = degree or 2 * domain.smoothness_order
    eps = half_width or 0.1 * domain.diam
    m = 4 * degree
    x = np.cos(np.pi * (np.arange(m) + 0.5) / m)
    pts = np.asarray(y, float)[None, :] + (eps * x)[:, None] * np.asarray(d, float)[None, :]
    vals = domain.value(pts)
    cheb = np.polynomial.chebyshev.chebfit(x, vals, degree)
    return np.polynomial.chebyshev.cheb2poly(cheb)


def contact_profile(domain: Domain, p: BoundaryPoint, d, rel_tol: float = 1e-8) -> tuple[float, float]:
    """(contact order, leading scaled coefficient) of the tangent line ``p.y + s d``."""
    d = unit(d)
    if abs(np.dot(d, p.n)) > domain.tol_angle:
        raise NotTangent(f"direction not tangent at {p.y.tolist()} (|d.n| = {abs(np.dot(d, p.n)):.3e})")
    eps = 0.1 * domain.diam
    c = line_taylor(domain, p.y, d, half_width=eps)
    scale = np.linalg.norm(domain.gradient(p.y)) * eps
    for k in range(2, domain.smoothness_order + 1):
        if abs(c[k]) > rel_tol * scale:
            return k, float(c[k])
    return INFINITE_ORDER, 0.0


def contact_order(domain: Domain, p: BoundaryPoint, d) -> float:
    """Smallest ``k >= 2`` with a nonzero ``k``-th derivative of ``phi`` along the tangent line."""
    return contact_profile(domain, p, d)[0]


# ---------------------------------------------------------------------------
# Shadow curves
# ---------------------------------------------------------------------------


@dataclass
class ShadowCurve:
    samples: list[BoundaryPoint]
    plane_normal: np.ndarray
    planarity_residual: float
    convexity_flag: bool
    contact_order: float
    normal_to_B: bool = False

    @property
    def points(self) -> np.ndarray:
        return np.array([s.y for s in self.samples])

    def qualifies(self, tol_plane: float) -> bool:
        """Planar, in a plane normal to B, and bounding a convex set of that plane."""
        return self.planarity_residual <= tol_plane and self.normal_to_B and self.convexity_flag

    def to_dict(self) -> dict:
        return {
            "points": self.points.tolist(),
            "plane_normal": self.plane_normal.tolist(),
            "planarity_residual": self.planarity_residual,
            "convex": self.convexity_flag,
            "contact_order": None if self.contact_order == INFINITE_ORDER else int(self.contact_order),
            "normal_to_B": self.normal_to_B,
        }


def _surface_point(domain: Domain, u: np.ndarray) -> np.ndarray:
    bp, _ = first_boundary_hit(domain, domain.center, u)
    return bp.y


def _frame_direction(frame, th, ph):
    e1, e2, b = frame
    return math.sin(th) * (math.cos(ph) * e1 + math.sin(ph) * e2) + math.cos(th) * b


def find_shadow_curves(domain: Domain, B_hat, grid_resolution: int = 48) -> list[ShadowCurve]:
    """Closed curves of the boundary where the outward normal is orthogonal to ``B_hat``.

    The boundary is parametrized radially from ``domain.center`` (the domain
    must be star-shaped about it), in spherical angles with polar axis
    ``B_hat``. Sign changes of ``n . B_hat`` are contoured on that grid and
    every vertex is refined by bracketed root finding along its grid edge.
    """
    from skimage.measure import find_contours

    b = unit(B_hat)
    e1, e2 = orthonormal_complement(b)
    frame = (e1, e2, b)
    n_th = int(grid_resolution)
    n_ph = 2 * n_th
    ths = np.pi * (np.arange(n_th) + 0.5) / n_th
    phs = 2 * np.pi * np.arange(n_ph + 1) / n_ph

    def g_at(th, ph):
        y = _surface_point(domain, _frame_direction(frame, th, ph))
        return float(np.dot(domain.normal(y), b)), y

    G = np.empty((n_th, n_ph + 1))
    for i, th in enumerate(ths):
        for j, ph in enumerate(phs[:-1]):
            G[i, j] = g_at(th, ph)[0]
        G[i, -1] = G[i, 0]

    contours = find_contours(G, 0.0)
    chains = _join_at_seam(contours, n_ph)
    curves = []
    for chain in chains:
        pts = []
        for r, c in chain:
            pts.append(_refine_vertex(domain, frame, ths, phs, r, c, g_at))
        pts = _dedupe(np.array(pts), 1e-9 * domain.diam)
        if len(pts) < 4:
            continue
        samples = [domain.boundary_point(y) for y in pts]
        curves.append(_describe_curve(domain, samples, b))
    return curves


def _join_at_seam(contours, n_ph: int) -> list[np.ndarray]:
    closed, open_ = [], []
    for c in contours:
        if np.allclose(c[0], c[-1]):
            closed.append(c[:-1])
        else:
            open_.append(c)
    # open pieces end on the seam columns 0 and n_ph; glue matching endpoints
    while open_:
        chain = open_.pop(0)
        for _ in range(len(open_) + 1):
            end = chain[-1]
            start = chain[0]
            if abs(end[1] - n_ph) < 1e-9 and abs(start[1]) < 1e-9 and abs(end[0] - start[0]) < 1e-9:
                break
            target_col = 0.0 if abs(end[1] - n_ph) < 1e-9 else (n_ph if abs(end[1]) < 1e-9 else None)
            match = None
            for k, piece in enumerate(open_):
                if target_col is not None and abs(piece[0][1] - target_col) < 1e-9 and abs(piece[0][0] - end[0]) < 1e-9:
                    match = k
                    break
            if match is None:
                break
            nxt = open_.pop(match)
            chain = np.vstack([chain, nxt[1:]])
        # drop the duplicated seam vertex when the chain closes on itself
        if abs(chain[-1][1] - n_ph) < 1e-9 and abs(chain[0][1]) < 1e-9:
            chain = chain[:-1]
        closed.append(chain)
    return closed


def _refine_vertex(domain, frame, ths, phs, r, c, g_at):
    n_th = len(ths)
    dth = ths[1] - ths[0] if n_th > 1 else np.pi
    dph = phs[1] - phs[0]

    def th_of(rr):
        return ths[0] + rr * dth

    def ph_of(cc):
        return cc * dph

    if abs(c - round(c)) < 1e-9:
        ph = ph_of(round(c))
        lo, hi = th_of(math.floor(r)), th_of(math.ceil(r))
        f = lambda t: g_at(t, ph)[0]  # noqa: E731
        if hi > lo and f(lo) * f(hi) < 0:
            th = brentq(f, lo, hi, xtol=1e-15, rtol=4 * np.finfo(float).eps)
        else:
            th = th_of(r)
        return g_at(th, ph)[1]
    th = th_of(round(r))
    lo, hi = ph_of(math.floor(c)), ph_of(math.ceil(c))
    f = lambda p: g_at(th, p)[0]  # noqa: E731
    if hi > lo and f(lo) * f(hi) < 0:
        ph = brentq(f, lo, hi, xtol=1e-15, rtol=4 * np.finfo(float).eps)
    else:
        ph = ph_of(c)
    return g_at(th, ph)[1]


def _dedupe(pts: np.ndarray, tol: float) -> np.ndarray:
    keep = [0]
    for i in range(1, len(pts)):
        if np.linalg.norm(pts[i] - pts[keep[-1]]) > tol:
            keep.append(i)
    if len(keep) > 1 and np.linalg.norm(pts[keep[-1]] - pts[keep[0]]) <= tol:
        keep.pop()
    return pts[keep]


def _describe_curve(domain: Domain, samples: list[BoundaryPoint], b: np.ndarray) -> ShadowCurve:
    pts = np.array([s.y for s in samples])
    centroid = pts.mean(axis=0)
    _, _, vt = np.linalg.svd(pts - centroid)
    normal = vt[2]
    if np.dot(normal, b) < 0:
        normal = -normal
    residual = float(np.max(np.abs((pts - centroid) @ normal)))
    # convexity of the projection into the fitted plane
    q = np.stack([(pts - centroid) @ vt[0], (pts - centroid) @ vt[1]], axis=-1)
    edges = np.roll(q, -1, axis=0) - q
    cross = edges[:, 0] * np.roll(edges, -1, axis=0)[:, 1] - edges[:, 1] * np.roll(edges, -1, axis=0)[:, 0]
    scale = np.max(np.abs(cross))
    significant = cross[np.abs(cross) > 1e-9 * scale]
    convex = bool(significant.size and (np.all(significant > 0) or np.all(significant < 0)))
    orders = [contact_order(domain, s, b) for s in samples]
    return ShadowCurve(
        samples=samples,
        plane_normal=normal,
        planarity_residual=residual,
        convexity_flag=convex,
        contact_order=min(orders),
        normal_to_B=bool(abs(np.dot(normal, b)) >= 1.0 - 1e-8),
    )
