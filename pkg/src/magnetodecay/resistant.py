"""Search for B-resistant rays and the uniform / polynomial decay verdict.

A ray is B-resistant when its longitudinal segments run parallel to ``B`` and
its transversal segments orthogonal to ``B``. Long-lived B-resistant rays are
the only obstruction to uniform decay; boundary rays gliding along a planar
convex curve whose normal is orthogonal to ``B`` force polynomial decay with an
exponent set by the contact order of that curve.
"""
from __future__ import annotations

import math
import time
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy.optimize import least_squares
from scipy.stats import qmc

from .errors import MagnetoDecayError, NoHit, NotHyperbolic, ValidationError
from .geometry import INFINITE_ORDER, Domain, ShadowCurve, find_shadow_curves, orthonormal_complement, unit
from .material import LONGITUDINAL, MODES, TRANSVERSAL, Material
from .rays import (
    CONVERT_LT,
    CONVERT_TL,
    DIFFRACTIVE_TOUCH,
    GLANCING,
    GLIDE_START,
    HYPERBOLIC,
    REFLECT,
    STOP,
    BoundaryEvent,
    Continuation,
    ContinuationPolicy,
    PhasePoint,
    Ray,
    classify_boundary,
    glancing_stratum,
    mode_convert,
    reflect_hyperbolic,
    resistant_angles,
    tangential_part,
    trace_ray,
)

SCHEMA_VERSION = "1.0"
UNIFORM, POLYNOMIAL, UNBOUNDED = "Uniform", "Polynomial", "UnboundedRays"


class BudgetExhausted(UserWarning):
    """The search hit its wall-clock budget; results are partial."""


@dataclass(frozen=True)
class ResistancePolicy:
    B_hat: tuple
    tol_parallel: float = 1e-6
    tol_orthogonal: float = 1e-6

    def __post_init__(self):
        b = np.asarray(self.B_hat, dtype=float)
        if b.shape != (3,) or not np.linalg.norm(b) > 0:
            raise ValidationError("B_hat must be a nonzero 3-vector")
        object.__setattr__(self, "B_hat", tuple(float(x) for x in unit(b)))
        for name in ("tol_parallel", "tol_orthogonal"):
            v = getattr(self, name)
            if not 0 < v < 0.1:
                raise ValidationError(f"{name} must lie in (0, 0.1), got {v}")

    @property
    def b(self) -> np.ndarray:
        return np.asarray(self.B_hat)

    def deviation(self, mode: str, direction) -> float:
        """Angle between ``direction`` and its constraint set (parallel for L, orthogonal for T)."""
        d = unit(direction)
        if mode == LONGITUDINAL:
            return math.asin(min(1.0, float(np.linalg.norm(np.cross(d, self.b)))))
        return math.asin(min(1.0, abs(float(np.dot(d, self.b)))))

    def tolerance(self, mode: str) -> float:
        return self.tol_parallel if mode == LONGITUDINAL else self.tol_orthogonal

    def satisfied(self, mode: str, direction) -> bool:
        return self.deviation(mode, direction) <= self.tolerance(mode)

    def glide_predicate(self, mode: str):
        """Boundary rays stay resistant only as transversal rays along curves with ``n . B = 0``."""
        tol = self.tol_orthogonal

        def ok(domain, y, v):
            if mode != TRANSVERSAL:
                return False
            return abs(float(np.dot(domain.normal(y), self.b))) <= tol and self.satisfied(mode, v)

        return ok

    def to_dict(self) -> dict:
        return {"B_hat": list(self.B_hat), "tol_parallel": self.tol_parallel, "tol_orthogonal": self.tol_orthogonal}


def admissible_continuations(event: BoundaryEvent, material: Material, policy: ResistancePolicy,
                             domain: Optional[Domain] = None) -> list[Continuation]:
    """All continuations at ``event`` keeping the ray B-resistant.

    ``event`` must carry the incoming mode and frequency. Glancing incidence
    needs ``domain`` to resolve the stratum; without it only hyperbolic cases
    are considered.
    """
    mode = event.mode_in
    eta_in = np.asarray(event.eta_in, dtype=float)
    p = event.point
    if not policy.satisfied(mode, eta_in):
        return []
    c_in = material.speed(mode)
    tau = c_in * float(np.linalg.norm(eta_in))
    eta_p = tangential_part(eta_in, p.n)
    cls = classify_boundary(tau, eta_p, c_in)
    out: list[Continuation] = []
    if cls == HYPERBOLIC:
        eta_r = reflect_hyperbolic(p, tau, eta_in, c_in)
        if policy.satisfied(mode, eta_r):
            out.append(Continuation(REFLECT, mode, eta_r))
        conv = mode_convert(p, tau, eta_p, mode, material)
        if conv is not None and policy.satisfied(conv.mode_out, conv.eta_out):
            a_exp, b_exp = resistant_angles(material, mode)
            info = {
                "alpha_in": conv.alpha_in,
                "beta_out": conv.beta_out,
                "tan_product": conv.tan_in * conv.tan_out,
                "angle_defect": max(abs(conv.alpha_in - a_exp), abs(conv.beta_out - b_exp)),
            }
            kind = CONVERT_TL if mode == TRANSVERSAL else CONVERT_LT
            out.append(Continuation(kind, conv.mode_out, conv.eta_out, info))
    elif cls == GLANCING and domain is not None:
        stratum = glancing_stratum(domain, p, tau, eta_p, c_in)
        eta_t = tau / c_in * unit(eta_p)
        if stratum.line_exits:
            if policy.glide_predicate(mode)(domain, p.y, eta_t):
                out.append(Continuation(GLIDE_START, mode, eta_t, {"stratum": str(stratum)}))
        elif policy.satisfied(mode, eta_t):
            out.append(Continuation(DIFFRACTIVE_TOUCH, mode, eta_t, {"stratum": str(stratum)}))
    return out


class ResistantContinuation(ContinuationPolicy):
    """Trace policy following admissible continuations; ``choices`` selects branches by event index."""

    def __init__(self, policy: ResistancePolicy, domain: Domain, choices: Sequence[int] = ()):
        self.policy = policy
        self.domain = domain
        self.choices = tuple(choices)
        self.branch_counts: list[int] = []

    def options(self, domain, material, point, mode, eta_in, tau):
        ev = BoundaryEvent(point, 0.0, tangential_part(eta_in, point.n), REFLECT, {}, mode, np.asarray(eta_in))
        try:
            opts = admissible_continuations(ev, material, self.policy)
        except NotHyperbolic:
            opts = []
        k = len(self.branch_counts)
        self.branch_counts.append(len(opts))
        if k < len(self.choices) and opts:
            i = self.choices[k]
            opts = [opts[i]] + opts[:i] + opts[i + 1:]
        return opts

    def glide_constraint(self, material, mode):
        pred = self.policy.glide_predicate(mode)
        return lambda y, v: pred(self.domain, y, v)


class _RelaxedContinuation(ContinuationPolicy):
    """Follows a prescribed junction sequence regardless of resistance; used for polishing seeds."""

    allow_glide = False

    def __init__(self, kinds: Sequence[str]):
        self.kinds = list(kinds)
        self.k = 0

    def options(self, domain, material, point, mode, eta_in, tau):
        want = self.kinds[self.k] if self.k < len(self.kinds) else REFLECT
        self.k += 1
        if want in (CONVERT_TL, CONVERT_LT):
            conv = mode_convert(point, tau, tangential_part(eta_in, point.n), mode, material)
            if conv is not None:
                return [Continuation(want, conv.mode_out, conv.eta_out)]
            return []
        return [Continuation(REFLECT, mode, reflect_hyperbolic(point, tau, eta_in, material.speed(mode)))]


# ---------------------------------------------------------------------------
# Seeds and witnesses
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SeedSpec:
    n_seeds: int = 10_000
    modes: tuple = MODES
    beam_width: int = 8
    refine_top: int = 8
    refine_rounds: int = 3
    rng_seed: int = 0
    max_seconds: Optional[float] = None
    explicit: tuple = ()  # PhasePoints used instead of low-discrepancy samples

    def to_dict(self) -> dict:
        return {
            "n_seeds": self.n_seeds if not self.explicit else len(self.explicit),
            "modes": list(self.modes),
            "beam_width": self.beam_width,
            "refine_top": self.refine_top,
            "refine_rounds": self.refine_rounds,
            "rng_seed": self.rng_seed,
            "max_seconds": self.max_seconds,
            "explicit": bool(self.explicit),
        }


def _seed_direction(mode: str, b: np.ndarray, u: float) -> np.ndarray:
    if mode == LONGITUDINAL:
        return b if u < 0.5 else -b
    e1, e2 = orthonormal_complement(b)
    psi = 2 * math.pi * u
    return math.cos(psi) * e1 + math.sin(psi) * e2


def constraint_seeds(domain: Domain, material: Material, policy: ResistancePolicy, spec: SeedSpec) -> list[PhasePoint]:
    """Interior phase points on the constraint manifolds from a scrambled Sobol sequence."""
    if spec.explicit:
        return list(spec.explicit)
    sampler = qmc.Sobol(d=5, scramble=True, seed=spec.rng_seed)
    lo, hi = domain.bounding_box
    seeds: list[PhasePoint] = []
    draws = 0
    while len(seeds) < spec.n_seeds and draws < 64 * max(spec.n_seeds, 1):
        m = 1 << max(int(math.ceil(math.log2(max(spec.n_seeds - len(seeds), 1)))) + 1, 6)
        u = sampler.random(m)
        draws += m
        ys = lo + u[:, :3] * (hi - lo)
        inside = domain.contains(ys)
        for row, y, ok in zip(u, ys, inside):
            if not ok or domain.distance_estimate(y) <= 1e-6 * domain.diam:
                continue
            mode = spec.modes[min(int(row[4] * len(spec.modes)), len(spec.modes) - 1)]
            d = _seed_direction(mode, policy.b, row[3])
            seeds.append(PhasePoint.from_direction(0.0, y, d, mode, material))
            if len(seeds) == spec.n_seeds:
                break
    return seeds


@dataclass
class Witness:
    """A B-resistant ray through an interior seed, traced both ways."""

    seed: PhasePoint
    forward: Ray
    backward: Ray
    seed_index: int = -1
    refined: bool = False

    @property
    def life_length(self) -> float:
        return self.forward.life_length + self.backward.life_length

    def max_deviation(self, policy: ResistancePolicy) -> float:
        worst = 0.0
        for ray in (self.forward, self.backward):
            for seg in ray.segments:
                worst = max(worst, policy.deviation(seg.mode, seg.start.eta))
        return worst

    def to_dict(self) -> dict:
        return {
            "type": "ray",
            "seed_index": self.seed_index,
            "refined": self.refined,
            "life_length": self.life_length,
            "seed": self.seed.to_dict(),
            "forward": self.forward.to_dict(),
            "backward": self.backward.to_dict(),
        }


def _trace_best(pp, domain, material, policy, t_max, beam_width) -> Ray:
    """Beam search over branch choices; returns the longest-lived ray."""
    queue: list[tuple] = [()]
    best: Optional[Ray] = None
    traced = 0
    while queue and traced < beam_width:
        prefix = queue.pop(0)
        cont = ResistantContinuation(policy, domain, prefix)
        try:
            ray = trace_ray(pp, domain, material, t_max, cont)
        except (NoHit, MagnetoDecayError):
            ray = Ray()
        traced += 1
        if best is None or ray.life_length > best.life_length:
            best = ray
        if best.life_length >= t_max:
            break
        for k in range(len(prefix), len(cont.branch_counts)):
            for alt in range(1, cont.branch_counts[k]):
                queue.append(tuple(prefix) + (0,) * (k - len(prefix)) + (alt,))
    return best if best is not None else Ray()


def _trace_witness(pp, domain, material, policy, T_target, beam_width, index=-1) -> Witness:
    fwd = _trace_best(pp, domain, material, policy, T_target, beam_width)
    remaining = T_target - fwd.life_length
    if remaining > 0:
        back_seed = PhasePoint(0.0, pp.y, pp.tau, -pp.eta, pp.mode)
        bwd = _trace_best(back_seed, domain, material, policy, remaining, beam_width)
    else:
        bwd = Ray()
    return Witness(pp, fwd, bwd, index)


def _search_chunk(args):
    domain, material, policy, T_target, beam_width, indexed_seeds = args
    out = []
    for i, pp in indexed_seeds:
        w = _trace_witness(pp, domain, material, policy, T_target, beam_width, i)
        out.append((i, w))
    return out


def _relaxed_residual(params, mode, policy, material, domain, kinds, n_events):
    b = policy.b
    y = np.asarray(params[:3])
    if not domain.contains(y):
        return np.full(n_events + 1, 1.0)
    d = b if mode == LONGITUDINAL else _direction_from_angle(b, params[3])
    if mode == LONGITUDINAL and params[3] < 0:
        d = -b
    pp = PhasePoint.from_direction(0.0, y, d, mode, material)
    pol = _RelaxedContinuation(kinds)
    try:
        ray = trace_ray(pp, domain, material, math.inf, pol, max_events=n_events)
    except MagnetoDecayError:
        return np.full(n_events + 1, 1.0)
    res = np.ones(n_events + 1)
    for j, seg in enumerate(ray.segments[1: n_events + 2]):
        res[j] = policy.deviation(seg.mode, seg.start.eta)
    return res


def _direction_from_angle(b, psi):
    e1, e2 = orthonormal_complement(b)
    return math.cos(psi) * e1 + math.sin(psi) * e2


def _seed_params(pp: PhasePoint, b: np.ndarray) -> np.ndarray:
    d = pp.direction
    if pp.mode == LONGITUDINAL:
        return np.array([*pp.y, 1.0 if np.dot(d, b) >= 0 else -1.0])
    e1, e2 = orthonormal_complement(b)
    return np.array([*pp.y, math.atan2(np.dot(d, e2), np.dot(d, e1))])


def refine_seed(w: Witness, domain, material, policy: ResistancePolicy, T_target, beam_width, rounds=3) -> Witness:
    """Polish a near-witness by least squares on the resistance defects of its first junctions."""
    best = w
    b = policy.b
    kinds = [e.kind for e in w.forward.events if e.kind in (REFLECT, CONVERT_TL, CONVERT_LT)]
    n_events = max(len(kinds), 1) + 2
    x = _seed_params(w.seed, b)
    for _ in range(rounds):
        mode = w.seed.mode
        free = slice(0, 3) if mode == LONGITUDINAL else slice(0, 4)
        fixed = x.copy()

        def fun(z):
            p = fixed.copy()
            p[free] = z
            return _relaxed_residual(p, mode, policy, material, domain, kinds, n_events)

        try:
            sol = least_squares(fun, x[free], method="trf", xtol=1e-15, ftol=1e-15, gtol=1e-15, max_nfev=100 * n_events,
                                diff_step=1e-9)
        except (ValueError, MagnetoDecayError):
            break
        x = fixed.copy()
        x[free] = sol.x
        y = x[:3]
        if not domain.contains(y):
            break
        d = (b if x[3] >= 0 else -b) if mode == LONGITUDINAL else _direction_from_angle(b, x[3])
        pp = PhasePoint.from_direction(0.0, y, d, mode, material)
        cand = _trace_witness(pp, domain, material, policy, T_target, beam_width, w.seed_index)
        cand.refined = True
        if cand.life_length > best.life_length:
            best = cand
        if best.life_length >= T_target:
            break
        n_events *= 2
    return best


@dataclass
class SearchResult:
    max_lifelength_found: float
    witnesses: list
    n_traced: int
    budget_exhausted: bool
    budget: dict

    def __iter__(self):
        yield self.max_lifelength_found
        yield self.witnesses


def search_resistant_rays(
    domain: Domain,
    material: Material,
    policy: ResistancePolicy,
    T_target: float,
    seeds: Optional[SeedSpec] = None,
    threads: int = 1,
    keep: int = 5,
) -> SearchResult:
    """Longest B-resistant life-length found from constraint-manifold seeds (capped at ``T_target``).

    Deterministic for a given ``SeedSpec``; with ``threads > 1`` the seeds are
    split in fixed chunks and merged by seed index, so results do not depend
    on the thread count.
    """
    seeds = seeds or SeedSpec()
    budget = {"T_target": T_target, **seeds.to_dict()}
    if T_target <= 0:
        return SearchResult(0.0, [], 0, False, budget)
    pts = constraint_seeds(domain, material, policy, seeds)
    indexed = list(enumerate(pts))
    start = time.monotonic()
    exhausted = False
    results: list[tuple[int, Witness]] = []
    chunk = max(1, min(256, len(indexed) // max(threads, 1) or 1))
    chunks = [indexed[i: i + chunk] for i in range(0, len(indexed), chunk)]
    args = [(domain, material, policy, T_target, seeds.beam_width, c) for c in chunks]
    if threads > 1 and len(chunks) > 1:
        with ProcessPoolExecutor(max_workers=threads) as ex:
            for part in ex.map(_search_chunk, args):
                results.extend(part)
                if seeds.max_seconds is not None and time.monotonic() - start > seeds.max_seconds:
                    exhausted = True
                    break
    else:
        for a in args:
            results.extend(_search_chunk(a))
            if seeds.max_seconds is not None and time.monotonic() - start > seeds.max_seconds:
                exhausted = True
                break
    results.sort(key=lambda iw: iw[0])
    ranked = sorted((w for _, w in results), key=lambda w: (-w.life_length, w.seed_index))
    if ranked and ranked[0].life_length < T_target and not exhausted:
        refined = []
        for w in ranked[: seeds.refine_top]:
            refined.append(refine_seed(w, domain, material, policy, T_target, seeds.beam_width, seeds.refine_rounds))
            if refined[-1].life_length >= T_target:
                break
        ranked = sorted(refined + ranked, key=lambda w: (-w.life_length, w.seed_index, not w.refined))
    if exhausted:
        warnings.warn(f"ray search stopped after {seeds.max_seconds} s; result is partial", BudgetExhausted)
    best = ranked[0].life_length if ranked else 0.0
    return SearchResult(min(best, T_target), ranked[:keep], len(results), exhausted, budget)


# ---------------------------------------------------------------------------
# Verdict
# ---------------------------------------------------------------------------


@dataclass
class DecayVerdict:
    kind: str
    K: Optional[int]
    witnesses: list
    max_lifelength_found: float
    search_budget: dict
    tolerances: dict
    L: Optional[float] = None
    notes: list = field(default_factory=list)
    budget_exhausted: bool = False

    def __post_init__(self):
        if self.kind not in (UNIFORM, POLYNOMIAL, UNBOUNDED):
            raise ValidationError(f"unknown verdict kind {self.kind!r}")
        if self.kind == POLYNOMIAL and (self.K is None or self.K < 2 or not self.witnesses):
            raise ValidationError("a polynomial verdict needs K >= 2 and at least one witness")
        if self.kind != POLYNOMIAL and self.K is not None:
            raise ValidationError("K is reported only with a polynomial verdict")

    @property
    def certified(self) -> bool:
        """Only polynomial verdicts rest on an explicit witness; uniform ones mean 'none found'."""
        return self.kind == POLYNOMIAL

    def to_dict(self) -> dict:
        d = {
            "schema_version": SCHEMA_VERSION,
            "kind": self.kind,
            "certified": self.certified,
            "witnesses": [
                {"type": "shadow_curve", **w.to_dict()} if isinstance(w, ShadowCurve) else w.to_dict()
                for w in self.witnesses
            ],
            "max_lifelength_found": None if math.isinf(self.max_lifelength_found) else self.max_lifelength_found,
            "budget": self.search_budget,
            "budget_exhausted": self.budget_exhausted,
            "tolerances": self.tolerances,
            "notes": list(self.notes),
        }
        if self.K is not None:
            d["K"] = self.K
        if self.L is not None:
            d["L"] = self.L
        return d


def qualifying_shadow_curves(domain: Domain, B_hat, grid_resolution: int = 48) -> list[ShadowCurve]:
    curves = find_shadow_curves(domain, B_hat, grid_resolution)
    return [c for c in curves if c.qualifies(domain.tol_plane)]


def classify_decay(
    domain: Domain,
    material: Material,
    policy: ResistancePolicy,
    T_target: float,
    seeds: Optional[SeedSpec] = None,
    grid_resolution: int = 48,
    threads: int = 1,
) -> DecayVerdict:
    """Uniform vs polynomial decay from shadow curves first, then the ray search."""
    tolerances = {
        **policy.to_dict(),
        "tol_plane": domain.tol_plane,
        "tol_angle": domain.tol_angle,
        "grid_resolution": grid_resolution,
    }
    seeds = seeds or SeedSpec()
    curves = qualifying_shadow_curves(domain, policy.b, grid_resolution)
    finite = [c for c in curves if c.contact_order != INFINITE_ORDER]
    if finite:
        K = int(max(c.contact_order for c in finite))
        return DecayVerdict(
            POLYNOMIAL, K, finite, math.inf, {"T_target": T_target, "search": "skipped"}, tolerances,
            notes=["planar convex shadow curve with normal orthogonal to B carries an infinite boundary ray"],
        )
    notes = []
    if curves:
        notes.append("qualifying shadow curve with contact beyond the smoothness order ignored")
    result = search_resistant_rays(domain, material, policy, T_target, seeds, threads)
    if T_target > 0 and result.max_lifelength_found >= T_target:
        notes.append("B-resistant ray reached the time budget; uniform decay cannot be asserted")
        return DecayVerdict(UNBOUNDED, None, result.witnesses[:1], result.max_lifelength_found, result.budget,
                            tolerances, notes=notes, budget_exhausted=result.budget_exhausted)
    if T_target <= 0:
        notes.append("trivial budget: T_target = 0")
    notes.append("no witness found up to budget")
    return DecayVerdict(UNIFORM, None, result.witnesses, result.max_lifelength_found, result.budget, tolerances,
                        L=result.max_lifelength_found, notes=notes, budget_exhausted=result.budget_exhausted)
