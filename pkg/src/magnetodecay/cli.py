"""Command-line front end: ``magnetodecay <command> --scenario FILE [options]``.

Exit codes: 0 success, 2 invalid input, 3 numerical failure. Every output
file carries the scenario hash, tool version and rng seed; wall-clock times
go only to ``run.log`` in the output directory.
"""
from __future__ import annotations

import argparse
import datetime
import json
import os
import sys
import time
from pathlib import Path
from typing import Optional

import numpy as np

from . import __version__
from . import io as fmt
from .decay import decay_report, default_window, fit_decay, predicted_vs_measured
from .errors import DegenerateSeries, NumericError, ValidationError
from .observability import lame_trajectory, observability_functional
from .rays import PhasePoint, SameModeReflection, trace_ray
from .geometry import find_shadow_curves
from .resistant import ResistancePolicy, ResistantContinuation, SeedSpec, classify_decay
from .scenario import Scenario
from .solver import MagnetoSolver, balance_residual, dissipation_integral, modal_field, run

OUT_ENV = "MAGNETODECAY_OUT"
EXIT_OK, EXIT_INVALID, EXIT_NUMERIC = 0, 2, 3


class Context:
    def __init__(self, args, scenario: Scenario):
        self.args = args
        self.scenario = scenario
        base = args.out or os.environ.get(OUT_ENV) or os.path.join("out", scenario.name)
        self.out = Path(base)
        self.out.mkdir(parents=True, exist_ok=True)
        self.prov = fmt.provenance(scenario.hash, scenario.rng_seed, scenario.name)
        self.figures = not args.no_figures
        self.written: list[Path] = []

    def json(self, name: str, payload: dict) -> Path:
        return self._add(fmt.write_json(self.out / name, payload, self.prov))

    def csv(self, name: str, header, rows) -> Path:
        return self._add(fmt.write_csv(self.out / name, header, rows, self.prov))

    def figure(self, fn, name: str, *a, **kw) -> Optional[Path]:
        if not self.figures:
            return None
        return self._add(fn(*a, path=self.out / name, prov=self.prov, **kw))

    def _add(self, p: Path) -> Path:
        self.written.append(p)
        return p

    def log(self, msg: str):
        stamp = datetime.datetime.now(datetime.timezone.utc).isoformat(timespec="seconds")
        with (self.out / "run.log").open("a") as fh:
            fh.write(f"{stamp} {self.args.command} {self.scenario.name}: {msg}\n")


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------


def _policy(scn: Scenario, material) -> ResistancePolicy:
    s = scn.doc.get("search", {})
    return ResistancePolicy(material.B_hat, s.get("tol_parallel", 1e-6), s.get("tol_orthogonal", 1e-6))


def cmd_trace(ctx: Context) -> dict:
    from .plotting import plot_ray

    scn = ctx.scenario
    tr = scn.section("trace")
    domain, material = scn.domain(), scn.material()
    start = PhasePoint.from_direction(0.0, tr["position"], tr["direction"], tr["mode"], material, tr["tau"])
    if tr["policy"] == "resistant":
        policy = ResistantContinuation(_policy(scn, material), domain)
    else:
        policy = SameModeReflection()
    ray = trace_ray(start, domain, material, tr["t_max"], policy)
    ctx.json("ray.json", ray.to_dict())
    ctx.csv("ray_events.csv", fmt.RAY_EVENT_COLUMNS, fmt.ray_event_rows(ray))
    ctx.figure(plot_ray, "ray.png", ray)
    return {"life_length": ray.life_length, "events": len(ray.events)}


def cmd_classify(ctx: Context) -> dict:
    from .plotting import plot_shadow_curves

    scn = ctx.scenario
    s = scn.section("search")
    domain, material = scn.domain(), scn.material()
    policy = _policy(scn, material)
    seeds = SeedSpec(s["n_seeds"], tuple(s["modes"]), s["beam_width"], s["refine_top"], s["refine_rounds"],
                     scn.rng_seed, s["max_seconds"])
    verdict = classify_decay(domain, material, policy, s["T_target"], seeds, s["grid_resolution"],
                             ctx.args.threads)
    ctx.json("verdict.json", verdict.to_dict())
    if ctx.figures:
        curves = find_shadow_curves(domain, policy.b, s["grid_resolution"])
        ctx.figure(plot_shadow_curves, "shadow_curves.png", curves, policy.b)
    return {"kind": verdict.kind, "K": verdict.K}


def _solver(scn: Scenario) -> MagnetoSolver:
    s = scn.section("solve")
    return MagnetoSolver(scn.grid(), scn.material(), s["dt"], s["theta"])


def cmd_simulate(ctx: Context) -> dict:
    from .plotting import plot_energy

    scn = ctx.scenario
    s = scn.section("solve")
    solver = _solver(scn)
    grid, material = solver.grid, solver.material
    coupled = s["coupled"]
    ckpt_dir = ctx.out / "checkpoints"

    if ctx.args.restart:
        rgrid, dt, states, side = fmt.read_checkpoint(ctx.args.restart)
        if side.get("scenario_hash") != scn.hash:
            raise ValidationError("checkpoint was written by a different scenario")
        if dt != solver.dt:
            raise ValidationError("checkpoint time step differs from the scenario time step")
        state, extra = states[0], states[1:]
        E_ref, dissipated = float(side["E_initial"]), float(side["dissipated"])
    else:
        v0 = modal_field(grid, s["initial"]["v0"])
        v1 = modal_field(grid, s["initial"]["v1"])
        state = solver.initial_state(v0, v1)
        extra = [solver.initial_state(*d[:2], h0=d[2], project=False)
                 for d in solver.derivative_data(v0, v1, state.h, s["N"])]
        E_ref, dissipated = None, 0.0

    n_total = int(round(s["t_end"] / solver.dt))
    every = s["checkpoint_every"] or n_total
    records = []
    while state.step < n_total:
        n_next = min(n_total, (state.step // every + 1) * every)
        t_stop = state.t + (n_next - state.step) * solver.dt
        recs, state, extra = run(solver, state, t_stop, coupled, extra, s["record_every"])
        records.extend(recs if not records else recs[1:])
        if E_ref is None:
            E_ref = records[0].E
        if s["checkpoint_every"] and state.step % every == 0:
            ckpt_dir.mkdir(exist_ok=True)
            integral = dissipation_integral(records, dissipated)[-1]
            path = ckpt_dir / f"state_{state.step:08d}.bin"
            fmt.write_checkpoint(path, grid, solver.dt, [state, *extra],
                                 {**ctx.prov, "material": material.to_dict(), "E_initial": E_ref,
                                  "dissipated": integral, "coupled": coupled})
            ctx._add(path)
    if not records:
        records = [solver.energy(state, extra)]
    resid = balance_residual(records, E_ref, dissipated)
    ctx.csv("energy.csv", fmt.energy_columns(s["N"]), fmt.energy_rows(records, resid))

    t = np.array([r.t for r in records])
    E = np.array([r.E for r in records])
    window = s["fit_window"]
    if window is None:
        diam = float(np.linalg.norm([L for L, n in zip(grid.extents, grid.n) if n > 1]))
        window = default_window(s["t_end"], diam, material.c_T)
    summary = {"E_initial": E_ref, "E_final": float(E[-1]), "max_balance_residual": float(np.max(np.abs(resid))),
               "relative_drift": float(abs(E[-1] - E_ref) / E_ref) if E_ref else 0.0,
               "steps": state.step, "dt": solver.dt, "coupled": coupled}
    fit = None
    try:
        fit = fit_decay((t, E), window, s["fit_margin"])
        fit_doc = {"fit": fit.to_dict(), **summary}
    except (DegenerateSeries, ValidationError) as exc:
        fit_doc = {"fit": None, "degenerate": str(exc), **summary}
    ctx.json("fit.json", fit_doc)
    if ctx.args.verdict:
        verdict = json.loads(Path(ctx.args.verdict).read_text())
        comparison = predicted_vs_measured(verdict, fit) if fit is not None else None
        report = decay_report(scn.name, verdict, fit, comparison)
        if fit is None:
            report["reasons"] = [f"no decay fit: {fit_doc['degenerate']}"]
        ctx.json("report.json", report)
    ctx.figure(plot_energy, "energy.png", t, E, fit=fit, dissipation=[r.dissipation_rate for r in records],
               title=scn.name)
    return {"E_final": float(E[-1]), "chosen": None if fit is None else fit.chosen}


def cmd_observability(ctx: Context) -> dict:
    scn = ctx.scenario
    o = scn.section("observability")
    dt = scn.doc.get("solve", {}).get("dt")
    solver = MagnetoSolver(scn.grid(), scn.material(), dt)
    u0 = modal_field(solver.grid, o["initial"]["u0"])
    u1 = modal_field(solver.grid, o["initial"]["u1"])
    traj = lame_trajectory(solver, u0, u1, o["N"], o["T"])
    report = observability_functional(traj, time_mode=o["time_mode"])
    by_n = [observability_functional(traj, N=n, time_mode=o["time_mode"]).Q for n in range(o["N"] + 1)]
    ctx.json("observability.json", {**report.to_dict(), "Q_by_N": by_n, "dt": solver.dt})
    return {"Q": report.Q, "ratio": report.ratio}


def cmd_validate(ctx: Context) -> dict:
    scn = ctx.scenario
    built = []
    if "domain" in scn.doc:
        scn.domain()
        built.append("domain")
    if "material" in scn.doc:
        scn.material()
        built.append("material")
    if "grid" in scn.doc:
        scn.grid()
        built.append("grid")
    if "solve" in scn.doc:
        _solver(scn)
        built.append("solver")
    return {"valid": True, "hash": scn.hash, "checked": built}


COMMANDS = {
    "trace": cmd_trace,
    "classify": cmd_classify,
    "simulate": cmd_simulate,
    "observability": cmd_observability,
    "validate": cmd_validate,
}


# ---------------------------------------------------------------------------
# Entry point
# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="magnetodecay", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        c = sub.add_parser(name)
        c.add_argument("--scenario", required=True, help="scenario YAML file")
        c.add_argument("--out", help=f"output directory (default ${OUT_ENV} or out/<name>)")
        c.add_argument("--threads", type=int, default=os.cpu_count() or 1)
        c.add_argument("--seed", type=int, help="override the scenario rng_seed")
        c.add_argument("--no-figures", action="store_true", help="skip PNG output")
        if name == "simulate":
            c.add_argument("--restart", help="continue from a checkpoint .bin file")
            c.add_argument("--verdict", help="verdict JSON to compare the fitted decay against")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.threads < 1:
            raise ValidationError("--threads must be at least 1")
        scn = Scenario.load(args.scenario)
        if args.seed is not None:
            scn = scn.with_seed(args.seed)
        ctx = Context(args, scn)
        t0 = time.perf_counter()
        ctx.log("start")
        summary = COMMANDS[args.command](ctx)
        ctx.log(f"done in {time.perf_counter() - t0:.2f} s")
    except ValidationError as exc:
        print(f"magnetodecay: invalid input: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except NumericError as exc:
        print(f"magnetodecay: numerical failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    print(json.dumps({"command": args.command, "scenario": scn.name, "hash": scn.hash, **fmt._clean(summary),
                      "outputs": [str(p) for p in ctx.written]}))
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
