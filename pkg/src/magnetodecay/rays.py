"""Generalized bicharacteristic flow for the two Lamé wave speeds.

A ray moves on straight lines inside the domain at speed ``c_mode`` in the
direction of its spatial frequency ``eta``; at the boundary the tangential
frequency ``eta'`` decides between hyperbolic (reflection or mode conversion),
glancing (diffractive touch or gliding along a boundary geodesic) and elliptic
incidence. Frequencies are normalized by ``tau > 0``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np

from .errors import ExceedsSmoothness, NoHit, NotHyperbolic, ValidationError
from .geometry import (
    INFINITE_ORDER,
    BoundaryPoint,
    Domain,
    contact_profile,
    first_boundary_hit,
    project_to_boundary,
    unit,
)
from .material import LONGITUDINAL, MODES, TRANSVERSAL, Material

HYPERBOLIC, ELLIPTIC, GLANCING = "Hyperbolic", "Elliptic", "Glancing"
DIFFRACTIVE, GLIDING, HIGHER_ORDER = "Diffractive", "Gliding", "HigherOrder"

REFLECT = "Reflect"
CONVERT_TL = "ConvertTL"
CONVERT_LT = "ConvertLT"
DIFFRACTIVE_TOUCH = "DiffractiveTouch"
GLIDE_START = "GlideStart"
GLIDE_END = "GlideEnd"
STOP = "Stop"

TOL_Q = 1e-8
MAX_EVENTS = 10_000

_SHORT = {HYPERBOLIC: "H", ELLIPTIC: "E", GLANCING: "G"}


@dataclass(frozen=True)
class PhasePoint:
    t: float
    y: np.ndarray
    tau: float
    eta: np.ndarray
    mode: str

    def __post_init__(self):
        if not self.tau > 0:
            raise ValidationError("tau must be positive")
        if self.mode not in MODES:
            raise ValidationError(f"unknown mode {self.mode!r}")

    @classmethod
    def from_direction(cls, t, y, direction, mode, material: Material, tau: float = 1.0) -> "PhasePoint":
        d = unit(direction)
        return cls(float(t), np.asarray(y, dtype=float), float(tau), tau / material.speed(mode) * d, mode)

    @property
    def direction(self) -> np.ndarray:
        return unit(self.eta)

    def characteristic_residual(self, material: Material) -> float:
        c = material.speed(self.mode)
        return abs(c**2 * float(np.dot(self.eta, self.eta)) - self.tau**2) / self.tau**2

    def reversed(self) -> "PhasePoint":
        return replace(self, eta=-self.eta)

    def to_dict(self) -> dict:
        return {"t": self.t, "y": self.y.tolist(), "tau": self.tau, "eta": self.eta.tolist(), "mode": self.mode}


@dataclass
class BoundaryEvent:
    point: BoundaryPoint
    t: float
    eta_prime: np.ndarray
    kind: str
    classification_in: dict
    mode_in: Optional[str] = None
    eta_in: Optional[np.ndarray] = None
    mode_out: Optional[str] = None
    eta_out: Optional[np.ndarray] = None
    reason: Optional[str] = None
    info: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        def vec(v):
            return None if v is None else np.asarray(v).tolist()

        return {
            "t": self.t,
            "kind": self.kind,
            "reason": self.reason,
            "point": self.point.to_dict(),
            "eta_prime": vec(self.eta_prime),
            "classification_in": self.classification_in,
            "mode_in": self.mode_in,
            "eta_in": vec(self.eta_in),
            "mode_out": self.mode_out,
            "eta_out": vec(self.eta_out),
            "info": self.info,
        }


@dataclass
class Segment:
    start: PhasePoint
    end: PhasePoint
    mode: str
    segment_type: str  # "interior-line" | "boundary-geodesic"
    path: Optional[np.ndarray] = None

    @property
    def duration(self) -> float:
        return self.end.t - self.start.t

    def to_dict(self) -> dict:
        d = {"start": self.start.to_dict(), "end": self.end.to_dict(), "mode": self.mode, "type": self.segment_type}
        if self.path is not None:
            d["path"] = self.path.tolist()
        return d


@dataclass
class Ray:
    segments: list = field(default_factory=list)
    events: list = field(default_factory=list)

    @property
    def life_length(self) -> float:
        return float(sum(s.duration for s in self.segments))

    @property
    def end(self) -> Optional[PhasePoint]:
        return self.segments[-1].end if self.segments else None

    def continuity_defect(self) -> float:
        worst = 0.0
        for a, b in zip(self.segments, self.segments[1:]):
            worst = max(worst, float(np.linalg.norm(a.end.y - b.start.y)), abs(a.end.t - b.start.t))
        return worst

    def to_dict(self) -> dict:
        return {
            "life_length": self.life_length,
            "segments": [s.to_dict() for s in self.segments],
            "events": [e.to_dict() for e in self.events],
        }


# ---------------------------------------------------------------------------
# Boundary classification
# ---------------------------------------------------------------------------


def tangential_part(eta, n) -> np.ndarray:
    eta = np.asarray(eta, dtype=float)
    return eta - np.dot(eta, n) * n


def classify_boundary(tau: float, eta_prime, speed: float, tol_q: float = TOL_Q) -> str:
    """Sign of ``q0 = |eta'|^2 - tau^2 / c^2`` with a glancing band of width ``tol_q tau^2``."""
    if not tau > 0:
        raise ValidationError("tau must be positive")
    q0 = float(np.dot(eta_prime, eta_prime)) - (tau / speed) ** 2
    if abs(q0) <= tol_q * tau**2:
        return GLANCING
    return HYPERBOLIC if q0 < 0 else ELLIPTIC


def classify_both(tau, eta_prime, material: Material, tol_q: float = TOL_Q) -> dict:
    return {m: _SHORT[classify_boundary(tau, eta_prime, material.speed(m), tol_q)] for m in MODES}


@dataclass(frozen=True)
class GlancingStratum:
    kind: str  # Diffractive | Gliding | HigherOrder
    k: Optional[int] = None
    line_exits: bool = True  # the tangent line leaves the closure forward

    def __str__(self):
        return f"{self.kind}({self.k})" if self.kind == HIGHER_ORDER else self.kind


def glancing_stratum(domain: Domain, p: BoundaryPoint, tau: float, eta_prime, speed: float) -> GlancingStratum:
    """Stratum of a glancing point for the interior problem.

    The order ``m`` and sign of the first nonvanishing derivative of ``phi``
    along the tangent line decide: ``m = 2`` with the line leaving the domain
    is gliding (the ray hugs the boundary), ``m = 2`` with the line inside is
    diffractive (the ray touches once); ``m > 2`` is ``HigherOrder(m - 2)``.
    """
    if classify_boundary(tau, eta_prime, speed) != GLANCING:
        raise ValidationError("glancing_stratum needs a glancing point")
    order, coeff = contact_profile(domain, p, unit(eta_prime))
    if order == INFINITE_ORDER:
        raise ExceedsSmoothness(f"glancing stratum unresolved up to order {domain.smoothness_order}")
    exits = coeff > 0
    if order == 2:
        return GlancingStratum(GLIDING if exits else DIFFRACTIVE, None, exits)
    return GlancingStratum(HIGHER_ORDER, int(order) - 2, exits)


# ---------------------------------------------------------------------------
# Hyperbolic continuations
# ---------------------------------------------------------------------------


def reflect_hyperbolic(p: BoundaryPoint, tau: float, eta_in, speed: float) -> np.ndarray:
    """Mirror law: same tangential frequency, normal component flipped inward."""
    eta_in = np.asarray(eta_in, dtype=float)
    eta_p = tangential_part(eta_in, p.n)
    if classify_boundary(tau, eta_p, speed) != HYPERBOLIC:
        raise NotHyperbolic("reflection requires a hyperbolic point")
    xi = float(np.dot(eta_in, p.n))
    if xi <= 0:
        raise NotHyperbolic("incoming frequency must point outward (eta . n > 0)")
    return eta_in - 2.0 * xi * p.n


@dataclass(frozen=True)
class Conversion:
    eta_out: np.ndarray
    mode_out: str
    tan_in: float  # tangent of the incidence angle, measured from the boundary tangent
    tan_out: float
    alpha_in: float
    beta_out: float


def normal_frequency(tau: float, eta_prime, speed: float) -> float:
    """``sqrt(tau^2 / c^2 - |eta'|^2)``, the normal component of a hyperbolic frequency."""
    return math.sqrt(max((tau / speed) ** 2 - float(np.dot(eta_prime, eta_prime)), 0.0))


def other_mode(mode: str) -> str:
    return LONGITUDINAL if mode == TRANSVERSAL else TRANSVERSAL


def mode_convert(p: BoundaryPoint, tau: float, eta_prime, from_mode: str, material: Material) -> Optional[Conversion]:
    """Convert ``from_mode`` into the other mode keeping ``eta'``; ``None`` when the target is not hyperbolic."""
    eta_prime = np.asarray(eta_prime, dtype=float)
    c_in = material.speed(from_mode)
    to_mode = other_mode(from_mode)
    c_out = material.speed(to_mode)
    if classify_boundary(tau, eta_prime, c_in) != HYPERBOLIC:
        raise NotHyperbolic(f"incoming {from_mode} wave is not hyperbolic")
    if classify_boundary(tau, eta_prime, c_out) != HYPERBOLIC:
        return None
    xi_in = normal_frequency(tau, eta_prime, c_in)
    xi_out = normal_frequency(tau, eta_prime, c_out)
    e = float(np.linalg.norm(eta_prime))
    eta_out = eta_prime - xi_out * p.n
    tan_in = xi_in / e if e > 0 else math.inf
    tan_out = xi_out / e if e > 0 else math.inf
    return Conversion(eta_out, to_mode, tan_in, tan_out, math.atan2(xi_in, e), math.atan2(xi_out, e))


def resistant_angles(material: Material, from_mode: str) -> tuple[float, float]:
    """(incidence, refraction) angles from the tangent forced on an L<->T junction of a B-resistant ray."""
    cT, cL = material.c_T, material.c_L
    if from_mode == TRANSVERSAL:
        return math.atan(cL / cT), math.atan(cT / cL)
    return math.atan(cT / cL), math.atan(cL / cT)


# ---------------------------------------------------------------------------
# Transport
# ---------------------------------------------------------------------------


def advance_interior(pp: PhasePoint, domain: Domain, material: Material) -> tuple[Segment, BoundaryPoint]:
    """Straight transport at speed ``c_mode`` until the first boundary hit."""
    c = material.speed(pp.mode)
    d = pp.direction
    y0 = pp.y
    offset = 0.0
    if domain.distance_estimate(y0) <= 1e-8 * domain.diam and abs(np.dot(domain.normal(y0), d)) <= 1e-6:
        # tangent departure (diffractive touch): start just past the contact point
        offset = 1e-6 * domain.diam
        y0 = y0 + offset * d
    bp, s = first_boundary_hit(domain, y0, d)
    s += offset
    end = PhasePoint(pp.t + s / c, bp.y, pp.tau, pp.eta, pp.mode)
    return Segment(pp, end, pp.mode, "interior-line"), bp


def normal_curvature(domain: Domain, y, v) -> float:
    """``v^T H v / |grad phi|``: positive where the boundary bends toward the interior along ``v``."""
    g = domain.gradient(y)
    return float(v @ domain.hessian(y) @ v) / float(np.linalg.norm(g))


def _geodesic_accel(domain: Domain, y, v) -> np.ndarray:
    g = domain.gradient(y)
    return -float(v @ domain.hessian(y) @ v) / float(np.dot(g, g)) * g


def glide_boundary(
    pp: PhasePoint,
    domain: Domain,
    material: Material,
    max_arclength: float,
    constraint=None,
    curvature_tol: float = 1e-8,
) -> tuple[Segment, str]:
    """Integrate the boundary geodesic from a glancing point.

    Projected velocity Verlet with re-projection onto ``{phi = 0}``; arclength
    is accumulated from chords with the curvature correction
    ``s = chord (1 + k^2 chord^2 / 24)``. Returns the segment and the stop
    reason: ``"budget"``, ``"stratum"`` (curvature no longer positive) or
    ``"constraint"`` (the optional predicate ``constraint(y, v)`` failed).
    """
    c = material.speed(pp.mode)
    y = project_to_boundary(domain, pp.y).y
    n = domain.normal(y)
    v = unit(tangential_part(pp.eta, n))
    path = [y.copy()]
    s_total = 0.0
    reason = "budget"
    if max_arclength <= 0:
        seg = Segment(pp, replace(pp, y=y), pp.mode, "boundary-geodesic", np.array(path))
        return seg, reason
    h_max = 1e-3 * domain.diam
    a = _geodesic_accel(domain, y, v)
    kap = abs(normal_curvature(domain, y, v))
    for _ in range(10_000_000):
        h = min(h_max, 0.1 / kap) if kap > 0 else h_max
        remaining = max_arclength - s_total
        last = False
        if h >= remaining:
            h = remaining
            last = True
        for _attempt in range(4):
            y_new, v_new, a_new, arc, kap_new = _verlet_step(domain, y, v, a, h, kap)
            if not last or abs(arc - remaining) <= 1e-15 * domain.diam:
                break
            h *= remaining / arc
        y, v, a, kap = y_new, v_new, a_new, kap_new
        s_total += arc
        path.append(y.copy())
        if last:
            break
        if normal_curvature(domain, y, v) <= curvature_tol / domain.diam:
            reason = "stratum"
            break
        if constraint is not None and not constraint(y, v):
            reason = "constraint"
            break
    end = PhasePoint(pp.t + s_total / c, y, pp.tau, pp.tau / c * v, pp.mode)
    return Segment(pp, end, pp.mode, "boundary-geodesic", np.array(path)), reason


def _verlet_step(domain, y, v, a, h, kap):
    y_pred = y + h * v + 0.5 * h * h * a
    y_new = project_to_boundary(domain, y_pred).y
    n_new = domain.normal(y_new)
    v_pred = unit(tangential_part(v + h * a, n_new))
    a_new = _geodesic_accel(domain, y_new, v_pred)
    v_new = unit(tangential_part(v + 0.5 * h * (a + a_new), n_new))
    kap_new = abs(normal_curvature(domain, y_new, v_new))
    chord = float(np.linalg.norm(y_new - y))
    k = 0.5 * (kap + kap_new)
    arc = chord * (1.0 + (k * chord) ** 2 / 24.0)
    return y_new, v_new, a_new, arc, kap_new


# ---------------------------------------------------------------------------
# Continuation policies and the tracer
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Continuation:
    kind: str
    mode: str
    eta: np.ndarray
    info: dict = field(default_factory=dict)


class ContinuationPolicy:
    """Decides how a ray continues at a boundary point. Override ``options``."""

    allow_glide = True

    def options(self, domain, material, point: BoundaryPoint, mode: str, eta_in, tau: float) -> list[Continuation]:
        raise NotImplementedError

    def glide_constraint(self, material, mode):
        return None


class SameModeReflection(ContinuationPolicy):
    def options(self, domain, material, point, mode, eta_in, tau):
        eta_out = reflect_hyperbolic(point, tau, eta_in, material.speed(mode))
        return [Continuation(REFLECT, mode, eta_out)]


def _event(point, t, mode, eta_in, tau, material, kind, **kw) -> BoundaryEvent:
    eta_p = tangential_part(eta_in, point.n)
    return BoundaryEvent(
        point=point,
        t=t,
        eta_prime=eta_p,
        kind=kind,
        classification_in=classify_both(tau, eta_p, material),
        mode_in=mode,
        eta_in=np.asarray(eta_in, dtype=float),
        **kw,
    )


def _truncate(seg: Segment, t_max: float) -> Segment:
    if seg.end.t <= t_max:
        return seg
    frac = (t_max - seg.start.t) / seg.duration if seg.duration > 0 else 0.0
    y = seg.start.y + frac * (seg.end.y - seg.start.y)
    return Segment(seg.start, replace(seg.end, t=t_max, y=y), seg.mode, seg.segment_type)


def trace_ray(
    initial: PhasePoint,
    domain: Domain,
    material: Material,
    t_max: float,
    policy: Optional[ContinuationPolicy] = None,
    max_events: int = MAX_EVENTS,
) -> Ray:
    """Follow the generalized bicharacteristic through ``initial`` up to time ``t_max``."""
    policy = policy or SameModeReflection()
    if initial.characteristic_residual(material) > 1e-10:
        raise ValidationError("initial phase point violates the characteristic relation")
    ray = Ray()
    pp = initial
    on_boundary = domain.distance_estimate(pp.y) <= 1e-8 * domain.diam
    if on_boundary:
        bp = domain.boundary_point(project_to_boundary(domain, pp.y).y)
        pp = replace(pp, y=bp.y)
        if np.dot(pp.eta, bp.n) > 1e-12 * np.linalg.norm(pp.eta):
            raise ValidationError("initial point on the boundary must not point outward")
    while pp.t < t_max and len(ray.events) < max_events:
        if on_boundary:
            bp = domain.boundary_point(pp.y)
            eta_p = tangential_part(pp.eta, bp.n)
            cls = classify_boundary(pp.tau, eta_p, material.speed(pp.mode))
            if cls == GLANCING:
                # after resolving, the ray leaves along its tangent line
                pp, stop = _handle_glancing(ray, pp, bp, domain, material, t_max, policy)
                if stop:
                    break
        try:
            seg, bp = advance_interior(pp, domain, material)
        except NoHit as exc:
            ray.events.append(_event(domain.boundary_point(pp.y), pp.t, pp.mode, pp.eta, pp.tau,
                                     material, STOP, reason=f"NoHit: {exc}"))
            break
        if seg.end.t >= t_max:
            ray.segments.append(_truncate(seg, t_max))
            pp = ray.segments[-1].end
            break
        ray.segments.append(seg)
        pp = seg.end
        on_boundary = True
        eta_p = tangential_part(pp.eta, bp.n)
        cls = classify_boundary(pp.tau, eta_p, material.speed(pp.mode))
        if cls == GLANCING:
            continue
        if cls == ELLIPTIC:
            ray.events.append(_event(bp, pp.t, pp.mode, pp.eta, pp.tau, material, STOP, reason="Elliptic"))
            break
        opts = policy.options(domain, material, bp, pp.mode, pp.eta, pp.tau)
        if not opts:
            ray.events.append(_event(bp, pp.t, pp.mode, pp.eta, pp.tau, material, STOP, reason="NoAdmissibleContinuation"))
            break
        choice = opts[0]
        ray.events.append(_event(bp, pp.t, pp.mode, pp.eta, pp.tau, material, choice.kind,
                                 mode_out=choice.mode, eta_out=choice.eta, info=dict(choice.info)))
        pp = PhasePoint(pp.t, bp.y, pp.tau, choice.eta, choice.mode)
    else:
        if len(ray.events) >= max_events:
            ray.events.append(_event(domain.boundary_point(pp.y), pp.t, pp.mode, pp.eta, pp.tau, material,
                                     STOP, reason="MaxEvents"))
    return ray


def _handle_glancing(ray, pp, bp, domain, material, t_max, policy):
    """Resolve a glancing point. Returns (new phase point, stop flag)."""
    c = material.speed(pp.mode)
    eta_p = tangential_part(pp.eta, bp.n)
    try:
        stratum = glancing_stratum(domain, bp, pp.tau, eta_p, c)
    except ExceedsSmoothness:
        ray.events.append(_event(bp, pp.t, pp.mode, pp.eta, pp.tau, material, STOP, reason="UnresolvedGlancing"))
        return pp, True
    info = {"stratum": str(stratum)}
    pp = replace(pp, eta=pp.tau / c * unit(eta_p))
    if not stratum.line_exits:
        ray.events.append(_event(bp, pp.t, pp.mode, pp.eta, pp.tau, material, DIFFRACTIVE_TOUCH,
                                 mode_out=pp.mode, eta_out=pp.eta, info=info))
        return pp, False
    if not policy.allow_glide:
        ray.events.append(_event(bp, pp.t, pp.mode, pp.eta, pp.tau, material, STOP, reason="GlideNotAdmissible", info=info))
        return pp, True
    constraint = policy.glide_constraint(material, pp.mode)
    if constraint is not None and not constraint(bp.y, unit(eta_p)):
        ray.events.append(_event(bp, pp.t, pp.mode, pp.eta, pp.tau, material, STOP, reason="NotResistant", info=info))
        return pp, True
    ray.events.append(_event(bp, pp.t, pp.mode, pp.eta, pp.tau, material, GLIDE_START, mode_out=pp.mode,
                             eta_out=pp.eta, info=info))
    seg, reason = glide_boundary(pp, domain, material, (t_max - pp.t) * c, constraint=constraint)
    ray.segments.append(seg)
    end = seg.end
    if reason == "budget":
        return end, True
    ebp = domain.boundary_point(end.y)
    if reason == "constraint":
        ray.events.append(_event(ebp, end.t, end.mode, end.eta, end.tau, material, STOP, reason="NotResistant"))
        return end, True
    ray.events.append(_event(ebp, end.t, end.mode, end.eta, end.tau, material, GLIDE_END, mode_out=end.mode,
                             eta_out=end.eta))
    return end, False


def chord_lengths(ray: Ray) -> np.ndarray:
    """Lengths of complete interior segments (boundary to boundary)."""
    out = []
    for seg in ray.segments:
        if seg.segment_type == "interior-line":
            out.append(float(np.linalg.norm(seg.end.y - seg.start.y)))
    return np.array(out)


def event_positions(ray: Ray, kinds: Sequence[str] = (REFLECT, CONVERT_TL, CONVERT_LT)) -> np.ndarray:
    return np.array([e.point.y for e in ray.events if e.kind in kinds]).reshape(-1, 3)
