"""Acceptance criteria; each test prints one PASS/FAIL line (collected again in the terminal summary)."""
import json
import math
import time
from pathlib import Path

import numpy as np
import pytest
import sympy as sp

from conftest import record_criterion
from magnetodecay import cli
from magnetodecay.decay import POLYNOMIAL_FIT, recurrence_sequence, russell_step_check
from magnetodecay.geometry import BoundaryPoint, contact_order, unit
from magnetodecay.grid import DIRICHLET, PERIODIC, Grid, Operators
from magnetodecay.helmholtz import helmholtz_decompose
from magnetodecay.io import read_csv
from magnetodecay.material import LONGITUDINAL, TRANSVERSAL, Material
from magnetodecay.observability import lame_trajectory, observability_functional
from magnetodecay.rays import (
    CONVERT_LT,
    CONVERT_TL,
    REFLECT,
    BoundaryEvent,
    PhasePoint,
    SameModeReflection,
    chord_lengths,
    classify_both,
    mode_convert,
    resistant_angles,
    tangential_part,
    trace_ray,
)
from magnetodecay.resistant import POLYNOMIAL, ResistancePolicy, SeedSpec, admissible_continuations, classify_decay
from magnetodecay.solver import MagnetoSolver, balance_residual, modal_field, run

SCENARIOS = Path(__file__).resolve().parents[1] / "scenarios"


def _random_unit(rng):
    v = rng.normal(size=3)
    return v / np.linalg.norm(v)


# ---------------------------------------------------------------------------
# 1. angle laws
# ---------------------------------------------------------------------------


def test_criterion_01_angle_laws():
    rng = np.random.default_rng(1)
    t0 = time.perf_counter()
    worst_prod = worst_energy = 0.0
    offered = 0
    n_events = 1000
    for _ in range(n_events):
        while True:
            cT, cL = rng.uniform(0.5, 3.0, size=2)
            if abs(cT - cL) > 1e-3:
                break
        mode_in = TRANSVERSAL if rng.random() < 0.5 else LONGITUDINAL
        n = _random_unit(rng)
        tang = unit(np.cross(n, _random_unit(rng)))
        mat0 = Material.from_speeds(cT, cL)
        alpha, beta = resistant_angles(mat0, mode_in)
        d_in = math.cos(alpha) * tang + math.sin(alpha) * n
        d_out = math.cos(beta) * tang - math.sin(beta) * n
        B_hat = d_out if mode_in == TRANSVERSAL else d_in  # the L leg is parallel to B
        mat = Material.from_speeds(cT, cL, B=tuple(B_hat))
        c_in, c_out = mat.speed(mode_in), mat.speed("L" if mode_in == "T" else "T")
        p = BoundaryPoint(rng.normal(size=3), n)
        eta_in = d_in / c_in
        eta_p = tangential_part(eta_in, n)
        conv = mode_convert(p, 1.0, eta_p, mode_in, mat)
        # angles measured from the boundary tangent, recomputed from the frequency vectors
        tan_a = abs(np.dot(eta_in, n)) / np.linalg.norm(tangential_part(eta_in, n))
        tan_b = abs(np.dot(conv.eta_out, n)) / np.linalg.norm(tangential_part(conv.eta_out, n))
        worst_prod = max(worst_prod, abs(tan_a * tan_b - 1.0), abs(conv.tan_in * conv.tan_out - 1.0))
        lhs, rhs = c_in**2 * (1 + tan_a**2), c_out**2 * (1 + tan_b**2)
        worst_energy = max(worst_energy, abs(lhs - rhs) / rhs)
        event = BoundaryEvent(p, 0.0, eta_p, REFLECT, classify_both(1.0, eta_p, mat), mode_in, eta_in)
        kinds = [c.kind for c in admissible_continuations(event, mat, ResistancePolicy(tuple(B_hat)))]
        offered += (CONVERT_TL if mode_in == TRANSVERSAL else CONVERT_LT) in kinds
    elapsed = time.perf_counter() - t0
    ok = worst_prod <= 1e-9 and worst_energy <= 1e-9 and offered == n_events and elapsed < 1.0
    record_criterion(1, "angle laws", ok,
                     f"max|tan a tan b - 1| = {worst_prod:.2e}, max rel speed-law defect = {worst_energy:.2e}, "
                     f"conversion offered {offered}/{n_events}, {elapsed:.2f} s")
    assert worst_prod <= 1e-9
    assert worst_energy <= 1e-9
    assert offered == n_events
    assert elapsed < 1.0


# ---------------------------------------------------------------------------
# 2. ball verdict
# ---------------------------------------------------------------------------


def test_criterion_02_ball_verdict(ball):
    rng = np.random.default_rng(2)
    details, ok = [], True
    for _ in range(3):
        b = _random_unit(rng)
        mat = Material(1.0, 1.0, B=tuple(b))
        t0 = time.perf_counter()
        v = classify_decay(ball, mat, ResistancePolicy(tuple(b)), 20.0, SeedSpec(n_seeds=64))
        elapsed = time.perf_counter() - t0
        planarity = max(w.planarity_residual for w in v.witnesses)
        normal_dot = max(abs(float(np.dot(s.n, b))) for w in v.witnesses for s in w.samples)
        equator = max(abs(float(np.dot(w.points, b).max())) for w in v.witnesses)
        good = (v.kind == POLYNOMIAL and v.K == 2 and planarity <= 1e-6 and normal_dot <= 1e-8
                and equator <= 1e-6 and elapsed < 30.0)
        ok &= good
        details.append(f"B={np.round(b, 3).tolist()}: {v.kind} K={v.K}, planarity {planarity:.1e}, "
                       f"|n.B| {normal_dot:.1e}, {elapsed:.1f} s")
    record_criterion(2, "ball verdict", ok, "; ".join(details))
    assert ok


# ---------------------------------------------------------------------------
# 3. quartic body verdict
# ---------------------------------------------------------------------------


def _symbolic_contact_order(expr, point, direction) -> int:
    """Order of the first nonvanishing Taylor coefficient of ``expr`` along ``point + s direction`` (s >= 2)."""
    x, y, z, s = sp.symbols("x y z s")
    line = {x: point[0] + s * direction[0], y: point[1] + s * direction[1], z: point[2] + s * direction[2]}
    poly = sp.Poly(sp.expand(expr.subs(line, simultaneous=True)), s)
    for k in range(2, poly.degree() + 1):
        if sp.simplify(poly.coeff_monomial(s**k)) != 0:
            return k
    raise AssertionError("no nonvanishing coefficient")


def test_criterion_03_quartic_verdict(quartic):
    x, y, z = sp.symbols("x y z")
    phi = x**4 + y**2 + z**2 - 1
    b = (1.0, 0.0, 0.0)
    # symbolic shadow set: n . B = 0 on the boundary means 4 x^3 = 0, i.e. the circle x = 0
    assert sp.solve(sp.diff(phi, x), x) == [0]
    th = sp.Symbol("th", real=True)
    oracle = _symbolic_contact_order(phi, (0, sp.cos(th), sp.sin(th)), (1, 0, 0))

    mat = Material(1.0, 1.0, B=b)
    t0 = time.perf_counter()
    v = classify_decay(quartic, mat, ResistancePolicy(b), 20.0, SeedSpec(n_seeds=64))
    elapsed = time.perf_counter() - t0

    engine = []
    for angle in np.linspace(0.1, 2 * math.pi, 13):
        p = np.array([0.0, math.cos(angle), math.sin(angle)])
        engine.append(contact_order(quartic, BoundaryPoint(p, quartic.normal(p)), np.array(b)))
    ok = oracle == 4 and v.kind == POLYNOMIAL and v.K == oracle and set(engine) == {oracle} and elapsed < 60.0
    record_criterion(3, "quartic body verdict", ok,
                     f"{v.kind} K={v.K}, symbolic order {oracle}, engine orders {sorted(set(engine))}, {elapsed:.1f} s")
    assert ok


# ---------------------------------------------------------------------------
# 4. billiard oracle
# ---------------------------------------------------------------------------


def test_criterion_04_billiard(ball):
    rng = np.random.default_rng(4)
    mat = Material(1.0, 1.0)
    n_rays, n_bounce = 1000, 50
    worst_chord = worst_tan = 0.0
    short = 0
    t0 = time.perf_counter()
    for _ in range(n_rays):
        y = _random_unit(rng) * 0.9 * rng.random() ** (1 / 3)
        d = _random_unit(rng)
        start = PhasePoint.from_direction(0.0, y, d, TRANSVERSAL, mat)
        ray = trace_ray(start, ball, mat, t_max=1e6, policy=SameModeReflection(), max_events=n_bounce + 1)
        reflects = [e for e in ray.events if e.kind == REFLECT][:n_bounce]
        chords = chord_lengths(ray)[1 : n_bounce + 1]  # the first segment starts inside
        if len(reflects) < n_bounce or len(chords) < n_bounce:
            short += 1
            continue
        p = np.linalg.norm(np.cross(y, d))
        exact = 2.0 * math.sqrt(1.0 - p * p)
        worst_chord = max(worst_chord, float(np.max(np.abs(chords - exact))) / exact)
        for e in reflects:
            after = tangential_part(e.eta_out, e.point.n)
            worst_tan = max(worst_tan, float(np.linalg.norm(after - e.eta_prime)))
    elapsed = time.perf_counter() - t0
    ok = short == 0 and worst_chord <= 1e-9 and worst_tan <= 1e-12 and elapsed < 60.0
    record_criterion(4, "billiard oracle", ok,
                     f"{n_rays} rays x {n_bounce} bounces: max rel chord error {worst_chord:.2e}, "
                     f"max tangential frequency change {worst_tan:.2e}, incomplete rays {short}, {elapsed:.1f} s")
    assert ok


# ---------------------------------------------------------------------------
# 5. energy identity
# ---------------------------------------------------------------------------

BOX_MATERIAL = Material(lam=0.5, mu=0.25, kappa=1.0, beta=1.0, B=(1.0, 0.3, 0.2))
V0_MODES = [{"k": [1, 1, 1], "amplitude": [1.0, 0.5, 0.3]}, {"k": [2, 1, 1], "amplitude": [0.0, 0.4, -0.2]}]
V1_MODES = [{"k": [1, 2, 1], "amplitude": [0.2, -0.3, 0.5]}]


def _coupled_box_run(n: int, t_end: float = 20.0):
    grid = Grid((10.0, 10.0, 10.0), (n, n, n))
    solver = MagnetoSolver(grid, BOX_MATERIAL)
    state = solver.initial_state(modal_field(grid, V0_MODES), modal_field(grid, V1_MODES))
    records, _, _ = run(solver, state, t_end)
    E = np.array([r.E for r in records])
    return E, balance_residual(records)


@pytest.mark.slow
def test_criterion_05_energy_identity():
    t0 = time.perf_counter()
    E, res = _coupled_box_run(32)
    E2, res2 = _coupled_box_run(63)  # h and dt halved
    elapsed = time.perf_counter() - t0
    E0 = E[0]
    rise = float(np.max(np.diff(E)))
    bal, bal2 = float(np.max(np.abs(res))) / E0, float(np.max(np.abs(res2))) / E2[0]
    factor = bal / bal2
    ok = rise <= 1e-9 * E0 and bal <= 1e-2 and factor >= 3.5 and elapsed < 600
    record_criterion(5, "energy identity", ok,
                     f"max step increase {rise / E0:.1e} E0, balance {bal:.2e} E0 (32^3) -> {bal2:.2e} E0 (63^3), "
                     f"factor {factor:.2f}, E drop {1 - E[-1] / E0:.1%}, {elapsed:.0f} s")
    assert rise <= 1e-9 * E0
    assert bal <= 1e-2
    assert factor >= 3.5
    assert elapsed < 600


# ---------------------------------------------------------------------------
# 6. conservative limits
# ---------------------------------------------------------------------------


def _drift(records):
    E = np.array([r.E for r in records])
    return float(np.max(np.abs(E - E[0])) / E[0])


def test_criterion_06_conservative_limits():
    t0 = time.perf_counter()
    # (i) B = 0 in a 3D box
    grid = Grid((10.0, 10.0, 10.0), (24, 24, 24))
    solver = MagnetoSolver(grid, Material(0.5, 0.25, B=(0.0, 0.0, 0.0)))
    state = solver.initial_state(modal_field(grid, V0_MODES), modal_field(grid, V1_MODES))
    recs, final, _ = run(solver, state, 20.0)
    drift_b0 = _drift(recs)
    h_b0 = max(float(np.max(np.abs(x))) for x in final.h)
    # (ii) velocity parallel to B, h0 = 0: 1D longitudinal motion along B, and antiplane motion with B out of plane
    cases = [
        (Grid((10.0, 1.0, 1.0), (64, 1, 1), (DIRICHLET, PERIODIC, PERIODIC)), (0.7, 0.0, 0.0),
         [{"k": [1, 0, 0], "amplitude": [1.0, 0, 0]}], [{"k": [3, 0, 0], "amplitude": [0.4, 0, 0]}]),
        (Grid((4.0, 5.0, 1.0), (24, 28, 1), (DIRICHLET, DIRICHLET, PERIODIC)), (0.0, 0.0, 1.3),
         [{"k": [1, 2, 0], "amplitude": [0, 0, 1.0]}], [{"k": [2, 1, 0], "amplitude": [0, 0, 0.5]}]),
    ]
    drift_par, h_par = 0.0, 0.0
    for g, B, m0, m1 in cases:
        s = MagnetoSolver(g, Material(0.5, 0.25, B=B))
        st = s.initial_state(modal_field(g, m0), modal_field(g, m1))
        recs, final, _ = run(s, st, 20.0)
        drift_par = max(drift_par, _drift(recs))
        h_par = max(h_par, max(float(np.max(np.abs(x))) for x in final.h))
    elapsed = time.perf_counter() - t0
    ok = drift_b0 <= 1e-6 and drift_par <= 1e-6 and elapsed < 300
    record_criterion(6, "conservative limits", ok,
                     f"B=0 drift {drift_b0:.1e} (max|h| {h_b0:.0e}), v_t || B drift {drift_par:.1e} "
                     f"(max|h| {h_par:.0e}), {elapsed:.1f} s")
    assert drift_b0 <= 1e-6
    assert drift_par <= 1e-6
    assert elapsed < 300


# ---------------------------------------------------------------------------
# 7. Helmholtz split
# ---------------------------------------------------------------------------


def test_criterion_07_helmholtz():
    rng = np.random.default_rng(7)
    grid = Grid((1.0, 1.2, 0.9), (32, 32, 32))
    ops = Operators(grid)
    modes = [{"k": rng.integers(1, 5, size=3).tolist(), "amplitude": rng.normal(size=3).tolist()} for _ in range(12)]
    u = modal_field(grid, modes)
    X, Y, Z = grid.mesh()
    u = u + np.stack([np.sin(np.pi * X) * Y * Z, np.cos(2 * X) * np.sin(np.pi * Y), X * Y * np.sin(np.pi * Z)])
    u = ops.mask_nodes(u)
    t0 = time.perf_counter()
    split = helmholtz_decompose(u, ops)
    elapsed = time.perf_counter() - t0
    scale = math.sqrt(ops.norm2(u)) / grid.h_min
    div_rel, curl_rel = split.div_residual / scale, split.curl_residual / scale
    reassembly = split.reassembly_error(u) / float(np.max(np.abs(u)))
    ok = div_rel <= 1e-8 and curl_rel <= 1e-8 and reassembly <= 1e-10 and elapsed < 60
    record_criterion(7, "Helmholtz split", ok,
                     f"|div u_T| = {div_rel:.1e} |u|/h, |curl u_L| = {curl_rel:.1e} |u|/h, "
                     f"reassembly {reassembly:.1e}, {split.iterations} CG iterations, {elapsed:.1f} s")
    assert ok


# ---------------------------------------------------------------------------
# 8. plane-wave speeds
# ---------------------------------------------------------------------------


def _measured_speed(component: int, material: Material, ppw: int = 16) -> float:
    """Standing wave sin(k pi x / L) along a Dirichlet axis, ``ppw`` nodes per wavelength."""
    k = 4
    n = ppw * k // 2 + 1  # wavelength 2L/k spans ppw cells
    L = 1.0
    grid = Grid((L, 1.0, 1.0), (n, 1, 1), (DIRICHLET, PERIODIC, PERIODIC))
    solver = MagnetoSolver(grid, material)
    amp = [0.0, 0.0, 0.0]
    amp[component] = 1.0
    profile = modal_field(grid, [{"k": [k, 0, 0], "amplitude": amp}])
    state = solver.initial_state(profile, 0 * profile)
    a = []
    for _ in range(400):
        a.append(solver.ops.dot(state.v, profile))
        state = solver.step_lame(state)
    a = np.array(a)
    # a_{j+1} + a_{j-1} = 2 cos(omega dt) a_j for a single discrete mode
    cos_w = np.sum((a[2:] + a[:-2]) * a[1:-1]) / (2 * np.sum(a[1:-1] ** 2))
    omega = math.acos(cos_w) / solver.dt
    return omega / (k * math.pi / L)


def test_criterion_08_plane_wave_speeds():
    t0 = time.perf_counter()
    errors = {}
    for lam, mu in ((1.0, 1.0), (2.5, 0.4)):
        mat = Material(lam, mu, B=(0.0, 0.0, 0.0))
        errors[f"c_T(lam={lam}, mu={mu})"] = abs(_measured_speed(1, mat) / mat.c_T - 1)
        errors[f"c_L(lam={lam}, mu={mu})"] = abs(_measured_speed(0, mat) / mat.c_L - 1)
    elapsed = time.perf_counter() - t0
    worst = max(errors.values())
    ok = worst <= 0.01 and elapsed < 120
    record_criterion(8, "plane-wave speeds", ok,
                     ", ".join(f"{k} err {v:.2%}" for k, v in errors.items()) + f", {elapsed:.1f} s")
    assert ok


# ---------------------------------------------------------------------------
# 9. Russell lemma
# ---------------------------------------------------------------------------


def test_criterion_09_russell_lemma():
    rng = np.random.default_rng(9)
    n_seq, n_terms = 100_000, 200
    t0 = time.perf_counter()
    M0 = 10.0 ** rng.uniform(-3, 3, size=n_seq)
    # beta_0 <= 6 M0 keeps beta_1 <= 2 M0, which the conclusion needs at n = 1
    beta0 = 6.0 * M0 * (1.0 - rng.random(n_seq))
    shrink = rng.uniform(0.5, 1.0, size=(n_terms, n_seq))
    beta = np.empty((n_terms + 1, n_seq))
    beta[0] = beta0
    for j in range(n_terms):
        root = recurrence_sequence(beta[j], M0, 1)[1]
        beta[j + 1] = root * np.where(rng.random(n_seq) < 0.5, 1.0, shrink[j])
    # rounding of beta_n - beta_{n+1} is of order eps * beta_n, hence the slack scale M0 beta_n
    hyp = beta[1:] ** 2 <= M0 * (beta[:-1] - beta[1:]) + 1e-12 * M0 * beta[:-1]
    n = np.arange(1, n_terms + 1)[:, None]
    violations = int(np.sum(beta[1:] > 2 * M0 / n * (1 + 1e-12)))
    # the termwise checker agrees on a subsample
    sub = [russell_step_check(beta[:, i], M0[i]) for i in range(0, n_seq, 997)]
    elapsed = time.perf_counter() - t0
    ok = bool(hyp.all()) and violations == 0 and all(c.holds and c.conclusion_holds for c in sub) and elapsed < 10
    record_criterion(9, "Russell lemma", ok,
                     f"{n_seq} sequences x {n_terms} terms, recurrence satisfied {bool(hyp.all())}, "
                     f"{violations} violations of beta_n <= 2 M0 / n, {elapsed:.1f} s")
    assert ok


# ---------------------------------------------------------------------------
# 10. observability sanity
# ---------------------------------------------------------------------------


def test_criterion_10_observability():
    t0 = time.perf_counter()
    # velocity parallel to B for all time: w x B vanishes identically
    g1 = Grid((4.0, 5.0, 1.0), (24, 28, 1), (DIRICHLET, DIRICHLET, PERIODIC))
    s1 = MagnetoSolver(g1, Material(0.5, 0.25, B=(0.0, 0.0, 1.3)))
    u0 = modal_field(g1, [{"k": [1, 2, 0], "amplitude": [0, 0, 1.0]}])
    u1 = modal_field(g1, [{"k": [2, 1, 0], "amplitude": [0, 0, 0.5]}])
    zero = observability_functional(lame_trajectory(s1, u0, u1, N=2, T=10.0))
    # stored regression trajectory in a 3D box
    g2 = Grid((10.0, 10.0, 10.0), (16, 16, 16))
    s2 = MagnetoSolver(g2, BOX_MATERIAL)
    traj = lame_trajectory(s2, modal_field(g2, V0_MODES), modal_field(g2, V1_MODES), N=3, T=12.0)
    Qn = [observability_functional(traj, N=n).Q for n in range(4)]
    times = np.linspace(0.0, traj.T, 9)
    Qt = [observability_functional(traj, T=t).Q for t in times]
    elapsed = time.perf_counter() - t0
    mono_n = all(b >= a for a, b in zip(Qn, Qn[1:]))
    mono_t = all(b >= a for a, b in zip(Qt, Qt[1:]))
    ok = zero.Q == 0.0 and mono_n and mono_t and Qn[-1] > 0 and elapsed < 120
    record_criterion(10, "observability sanity", ok,
                     f"Q = {zero.Q} for v_t || B, Q by N {[f'{q:.4g}' for q in Qn]}, monotone in N {mono_n}, "
                     f"in T {mono_t}, {elapsed:.1f} s")
    assert ok


# ---------------------------------------------------------------------------
# 11. decay-class diagnostic
# ---------------------------------------------------------------------------


@pytest.mark.slow
def test_criterion_11_decay_class(tmp_path, capsys):
    t0 = time.perf_counter()
    code = cli.main(["simulate", "--scenario", str(SCENARIOS / "box_antiplane_25d.yaml"), "--out", str(tmp_path),
                     "--no-figures"])
    elapsed = time.perf_counter() - t0
    capsys.readouterr()
    assert code == 0
    fit = json.loads((tmp_path / "fit.json").read_text())["fit"]
    _, header, rows = read_csv(tmp_path / "energy.csv")
    t, E = rows[:, header.index("t")], rows[:, header.index("E")]
    lo, hi = fit["window"]
    inside = (t >= lo) & (t <= hi)
    P = (E * (t + 1.0))[inside] / E[0]
    half = P.size // 2
    bounded = float(P[half:].max()) <= float(P[:half].max())
    p = fit["fit_polynomial"]["p"]
    ok = fit["chosen"] == POLYNOMIAL_FIT and fit["margin"] >= 0.10 and p > 0 and bounded and elapsed < 900
    record_criterion(11, "decay-class diagnostic", ok,
                     f"chosen {fit['chosen']}, margin {fit['margin']:.1%}, p = {p:.3g} (qualitative), "
                     f"max E(t+1)/E0 second half {P[half:].max():.3g} <= first half {P[:half].max():.3g}: {bounded}, "
                     f"{elapsed:.0f} s")
    assert ok
