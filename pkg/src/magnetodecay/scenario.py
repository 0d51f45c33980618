"""Scenario files: one YAML document per reproducible run.

Top-level keys (only ``name`` is required; sections are needed by the
commands that use them)::

    schema_version: "1.0"
    name: ball
    rng_seed: 0
    domain:   {family: ball, params: {radius: 1.0}}
    material: {lambda: 1.0, mu: 1.0, kappa: 1.0, beta: 1.0, B: [1, 0, 0]}
    trace:    {position, direction, mode, t_max, tau, policy: reflect | resistant}
    search:   {T_target, n_seeds, modes, beam_width, refine_top, refine_rounds,
               max_seconds, tol_parallel, tol_orthogonal, grid_resolution}
    grid:     {extents, n, bc}
    solve:    {t_end, dt, theta, coupled, N, record_every, checkpoint_every,
               initial: {v0: [modes], v1: [modes]}, fit_window, fit_margin}
    observability: {T, N, time_mode, initial: {u0: [modes], u1: [modes]}}

A mode is ``{k: [kx, ky, kz], amplitude: [ax, ay, az]}``; see
``solver.mode_profile`` for the profiles. The scenario hash is the SHA-256 of
the canonical JSON of the normalized document.
"""
from __future__ import annotations

import copy
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np
import yaml

from .errors import ValidationError
from .geometry import Domain, DomainSpec
from .grid import Grid
from .io import content_hash
from .material import MODES, Material
from .observability import TIME_MODES

SCHEMA_VERSION = "1.0"
POLICIES = ("reflect", "resistant")

_DEFAULTS = {
    "trace": {"t_max": 10.0, "tau": 1.0, "mode": "T", "policy": "reflect"},
    "search": {
        "T_target": 20.0,
        "n_seeds": 2000,
        "modes": list(MODES),
        "beam_width": 8,
        "refine_top": 8,
        "refine_rounds": 3,
        "max_seconds": None,
        "tol_parallel": 1e-6,
        "tol_orthogonal": 1e-6,
        "grid_resolution": 48,
    },
    "solve": {
        "dt": None,
        "theta": 0.5,
        "coupled": True,
        "N": 0,
        "record_every": 1,
        "checkpoint_every": 0,
        "fit_window": None,
        "fit_margin": 0.1,
    },
    "observability": {"N": 1, "time_mode": "dirichlet"},
}

_SECTIONS = ("domain", "material", "trace", "search", "grid", "solve", "observability")
_ALLOWED = {
    "trace": {"position", "direction", "mode", "t_max", "tau", "policy"},
    "search": set(_DEFAULTS["search"]),
    "solve": {"t_end", "initial"} | set(_DEFAULTS["solve"]),
    "observability": {"T", "N", "time_mode", "initial"},
}


def _require(cond: bool, msg: str):
    if not cond:
        raise ValidationError(msg)


def _vec3(x, what: str) -> list:
    try:
        v = [float(c) for c in x]
    except (TypeError, ValueError):
        raise ValidationError(f"{what} must be a list of three numbers") from None
    _require(len(v) == 3 and all(np.isfinite(v)), f"{what} must be a list of three finite numbers")
    return v


def _modes(lst, what: str) -> list:
    _require(isinstance(lst, list), f"{what} must be a list of modes")
    out = []
    for m in lst:
        _require(isinstance(m, dict) and {"k", "amplitude"} <= set(m), f"each mode in {what} needs 'k' and 'amplitude'")
        k = [int(c) for c in m["k"]]
        _require(len(k) == 3 and min(k) >= 0, f"mode numbers in {what} must be three non-negative integers")
        out.append({"k": k, "amplitude": _vec3(m["amplitude"], f"{what} amplitude")})
    return out


@dataclass(frozen=True)
class Scenario:
    doc: dict
    source: Optional[str] = None

    # -- construction -------------------------------------------------------
    @classmethod
    def from_dict(cls, raw: dict, source: Optional[str] = None) -> "Scenario":
        return cls(normalize(raw), source)

    @classmethod
    def load(cls, path) -> "Scenario":
        path = Path(path)
        try:
            raw = yaml.safe_load(path.read_text())
        except FileNotFoundError:
            raise ValidationError(f"scenario file {path} does not exist") from None
        except yaml.YAMLError as exc:
            raise ValidationError(f"scenario file {path} is not valid YAML: {exc}") from None
        return cls.from_dict(raw, str(path))

    def with_seed(self, seed: int) -> "Scenario":
        d = copy.deepcopy(self.doc)
        d["rng_seed"] = int(seed)
        return Scenario(normalize(d), self.source)

    # -- accessors ----------------------------------------------------------
    @property
    def name(self) -> str:
        return self.doc["name"]

    @property
    def rng_seed(self) -> int:
        return self.doc["rng_seed"]

    @property
    def hash(self) -> str:
        return content_hash(self.doc)

    def section(self, key: str) -> dict:
        if key not in self.doc:
            raise ValidationError(f"scenario {self.name!r} has no '{key}' section")
        return self.doc[key]

    def domain(self) -> Domain:
        return Domain.from_spec(DomainSpec.from_dict(self.section("domain")))

    def material(self) -> Material:
        return Material.from_dict(self.section("material"))

    def grid(self) -> Grid:
        return Grid.from_dict(self.section("grid"))


def normalize(raw) -> dict:
    """Validate a raw scenario mapping and fill in defaults."""
    _require(isinstance(raw, dict), "scenario must be a mapping")
    d = copy.deepcopy(raw)
    version = str(d.pop("schema_version", SCHEMA_VERSION))
    _require(version == SCHEMA_VERSION, f"unsupported schema_version {version!r}; expected {SCHEMA_VERSION!r}")
    unknown = set(d) - set(_SECTIONS) - {"name", "rng_seed"}
    _require(not unknown, f"unknown scenario keys: {sorted(unknown)}")
    _require(isinstance(d.get("name"), str) and d["name"], "scenario needs a non-empty 'name'")
    out = {"schema_version": SCHEMA_VERSION, "name": d["name"], "rng_seed": int(d.get("rng_seed", 0))}
    _require(out["rng_seed"] >= 0, "rng_seed must be non-negative")

    for key in _SECTIONS:
        if key not in d:
            continue
        sec = d[key]
        _require(isinstance(sec, dict), f"'{key}' must be a mapping")
        if key in _ALLOWED:
            bad = set(sec) - _ALLOWED[key]
            _require(not bad, f"unknown keys in '{key}': {sorted(bad)}")
        out[key] = {**copy.deepcopy(_DEFAULTS.get(key, {})), **sec}

    if "domain" in out:
        out["domain"] = DomainSpec.from_dict(out["domain"]).to_dict()
    if "material" in out:
        out["material"] = Material.from_dict(out["material"]).to_dict()
    if "grid" in out:
        out["grid"] = Grid.from_dict(out["grid"]).to_dict()
    if "trace" in out:
        _check_trace(out)
    if "search" in out:
        _check_search(out["search"])
    if "solve" in out:
        _check_solve(out)
    if "observability" in out:
        _check_observability(out)
    return out


def _check_trace(out: dict):
    tr = out["trace"]
    _require("domain" in out and "material" in out, "'trace' needs 'domain' and 'material' sections")
    _require("position" in tr and "direction" in tr, "'trace' needs 'position' and 'direction'")
    tr["position"] = _vec3(tr["position"], "trace position")
    tr["direction"] = _vec3(tr["direction"], "trace direction")
    _require(np.linalg.norm(tr["direction"]) > 0, "trace direction must be nonzero")
    _require(tr["mode"] in MODES, f"trace mode must be one of {MODES}")
    _require(tr["policy"] in POLICIES, f"trace policy must be one of {POLICIES}")
    tr["t_max"] = float(tr["t_max"])
    tr["tau"] = float(tr["tau"])
    _require(tr["t_max"] >= 0, "trace t_max must be non-negative")
    _require(tr["tau"] > 0, "trace tau must be positive")


def _check_search(s: dict):
    s["T_target"] = float(s["T_target"])
    _require(s["T_target"] >= 0, "search T_target must be non-negative")
    for k in ("n_seeds", "beam_width", "refine_top", "refine_rounds", "grid_resolution"):
        s[k] = int(s[k])
    _require(s["n_seeds"] >= 1, "search n_seeds must be at least 1")
    _require(s["beam_width"] >= 1, "search beam_width must be at least 1")
    _require(s["refine_top"] >= 0 and s["refine_rounds"] >= 0, "refinement counts must be non-negative")
    _require(s["grid_resolution"] >= 8, "search grid_resolution must be at least 8")
    s["modes"] = list(s["modes"])
    _require(s["modes"] and set(s["modes"]) <= set(MODES), f"search modes must be a non-empty subset of {MODES}")
    for k in ("tol_parallel", "tol_orthogonal"):
        s[k] = float(s[k])
        _require(0 < s[k] < 0.1, f"{k} must lie in (0, 0.1)")
    if s["max_seconds"] is not None:
        s["max_seconds"] = float(s["max_seconds"])
        _require(s["max_seconds"] > 0, "search max_seconds must be positive")


def _check_solve(out: dict):
    s = out["solve"]
    _require("grid" in out and "material" in out, "'solve' needs 'grid' and 'material' sections")
    _require("t_end" in s, "'solve' needs 't_end'")
    s["t_end"] = float(s["t_end"])
    _require(s["t_end"] > 0, "solve t_end must be positive")
    if s["dt"] is not None:
        s["dt"] = float(s["dt"])
        _require(s["dt"] > 0, "solve dt must be positive")
    s["theta"] = float(s["theta"])
    _require(0.5 <= s["theta"] <= 1.0, "solve theta must lie in [1/2, 1]")
    s["coupled"] = bool(s["coupled"])
    for k in ("N", "record_every", "checkpoint_every"):
        s[k] = int(s[k])
    _require(s["N"] >= 0, "solve N must be non-negative")
    _require(s["record_every"] >= 1, "solve record_every must be at least 1")
    _require(s["checkpoint_every"] >= 0, "solve checkpoint_every must be non-negative")
    _require(s["checkpoint_every"] % s["record_every"] == 0,
             "solve checkpoint_every must be a multiple of record_every")
    init = s.get("initial", {})
    _require(isinstance(init, dict) and set(init) <= {"v0", "v1"}, "solve initial takes 'v0' and 'v1' mode lists")
    s["initial"] = {k: _modes(init.get(k, []), f"solve initial {k}") for k in ("v0", "v1")}
    if s["fit_window"] is not None:
        w = [float(x) for x in s["fit_window"]]
        _require(len(w) == 2 and 0 <= w[0] < w[1], "solve fit_window must be [t_lo, t_hi] with t_lo < t_hi")
        s["fit_window"] = w
    s["fit_margin"] = float(s["fit_margin"])
    _require(0 <= s["fit_margin"] < 1, "solve fit_margin must lie in [0, 1)")


def _check_observability(out: dict):
    o = out["observability"]
    _require("grid" in out and "material" in out, "'observability' needs 'grid' and 'material' sections")
    _require("T" in o, "'observability' needs 'T'")
    o["T"] = float(o["T"])
    _require(o["T"] > 0, "observability T must be positive")
    o["N"] = int(o["N"])
    _require(o["N"] >= 0, "observability N must be non-negative")
    _require(o["time_mode"] in TIME_MODES, f"observability time_mode must be one of {TIME_MODES}")
    init = o.get("initial")
    if init is None:
        _require("solve" in out, "'observability' needs 'initial' data or a 'solve' section")
        init = {"u0": out["solve"]["initial"]["v0"], "u1": out["solve"]["initial"]["v1"]}
    _require(isinstance(init, dict) and set(init) <= {"u0", "u1"}, "observability initial takes 'u0' and 'u1'")
    o["initial"] = {k: _modes(init.get(k, []), f"observability initial {k}") for k in ("u0", "u1")}
