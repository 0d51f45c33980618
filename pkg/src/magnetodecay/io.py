"""On-disk formats: provenance, JSON/CSV writers, ray tables and solver checkpoints.

Checkpoint layout (all little-endian):

    magic      8 bytes   b"MGDCKPT1"
    dims       3 x u64   nodes per axis
    spacings   3 x f64
    t          f64
    dt         f64
    step       u64
    n_states   u64       main trajectory plus differentiated ones
    then for every state: v, vt (3 components each), h_x, h_y, h_z,
    every array as f64 in x-fastest order.

A JSON sidecar with the same stem records the grid, material and provenance.
"""
from __future__ import annotations

import csv
import hashlib
import json
import math
import struct
from pathlib import Path
from typing import Iterable, Optional, Sequence

import numpy as np

from . import __version__
from .errors import ValidationError
from .grid import Grid, Operators
from .rays import Ray
from .solver import EnergyRecord, FieldState

SCHEMA_VERSION = "1.0"
MAGIC = b"MGDCKPT1"
_HEADER = struct.Struct("<8s3Q3ddd2Q")


def canonical_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), default=_jsonable)


def content_hash(obj) -> str:
    return hashlib.sha256(canonical_json(obj).encode()).hexdigest()


def _jsonable(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    if isinstance(o, (set, tuple)):
        return list(o)
    raise TypeError(f"not JSON serializable: {type(o).__name__}")


def _clean(o):
    """Replace non-finite floats by strings so the JSON stays standard."""
    if isinstance(o, dict):
        return {k: _clean(v) for k, v in o.items()}
    if isinstance(o, (list, tuple)):
        return [_clean(v) for v in o]
    if isinstance(o, np.ndarray):
        return _clean(o.tolist())
    if isinstance(o, (np.floating, float)):
        x = float(o)
        if math.isfinite(x):
            return x
        return "inf" if x > 0 else ("-inf" if x < 0 else "nan")
    if isinstance(o, np.integer):
        return int(o)
    return o


def provenance(scenario_hash: str, rng_seed: int, name: str = "") -> dict:
    return {"scenario_hash": scenario_hash, "tool_version": __version__, "rng_seed": int(rng_seed),
            "scenario": name}


def write_json(path, payload: dict, prov: dict) -> Path:
    path = Path(path)
    doc = {"schema_version": SCHEMA_VERSION, "provenance": prov, **_clean(payload)}
    path.write_text(json.dumps(doc, indent=2, sort_keys=False) + "\n")
    return path


def write_csv(path, header: Sequence[str], rows: Iterable[Sequence], prov: dict) -> Path:
    path = Path(path)
    with path.open("w", newline="") as fh:
        fh.write(f"# schema_version={SCHEMA_VERSION}\n")
        for k in ("scenario_hash", "tool_version", "rng_seed", "scenario"):
            fh.write(f"# {k}={prov.get(k, '')}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(x) for x in row])
    return path


def _fmt(x):
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    return x


def read_csv(path) -> tuple[dict, list[str], np.ndarray]:
    """Read a CSV written by ``write_csv``: (provenance comments, header, numeric rows)."""
    meta, rows, header = {}, [], None
    with Path(path).open() as fh:
        for line in fh:
            if line.startswith("#"):
                k, _, v = line[1:].strip().partition("=")
                meta[k.strip()] = v
            elif header is None:
                header = line.strip().split(",")
            else:
                rows.append([float(x) if x not in ("", "None") else math.nan for x in line.strip().split(",")])
    return meta, header or [], np.array(rows)


# ---------------------------------------------------------------------------
# Rays
# ---------------------------------------------------------------------------

RAY_EVENT_COLUMNS = [
    "index", "t", "kind", "reason", "mode_in", "mode_out",
    "y_x", "y_y", "y_z", "n_x", "n_y", "n_z",
    "eta_prime_x", "eta_prime_y", "eta_prime_z", "class_T", "class_L", "stratum",
]


def ray_event_rows(ray: Ray) -> list:
    rows = []
    for i, e in enumerate(ray.events):
        rows.append([
            i, e.t, e.kind, e.reason or "", e.mode_in or "", e.mode_out or "",
            *e.point.y.tolist(), *np.asarray(e.point.n).tolist(), *np.asarray(e.eta_prime).tolist(),
            e.classification_in.get("T", ""), e.classification_in.get("L", ""), e.info.get("stratum", ""),
        ])
    return rows


# ---------------------------------------------------------------------------
# Energy series
# ---------------------------------------------------------------------------


def energy_columns(n_derivs: int) -> list[str]:
    return ["t", "E", "kinetic", "shear", "compressional", "magnetic", "dissipation_rate", "balance_residual",
            *[f"E_{j}" for j in range(1, n_derivs + 1)]]


def energy_rows(records: Sequence[EnergyRecord], residual: Sequence[float]) -> list:
    rows = []
    for r, res in zip(records, residual):
        base = r.row()
        rows.append([*base[:7], float(res), *base[7:]])
    return rows


# ---------------------------------------------------------------------------
# Checkpoints
# ---------------------------------------------------------------------------


def _state_arrays(s: FieldState) -> list[np.ndarray]:
    return [*(s.v[c] for c in range(3)), *(s.vt[c] for c in range(3)), *s.h]


def write_checkpoint(path, grid: Grid, dt: float, states: Sequence[FieldState], sidecar: dict) -> Path:
    path = Path(path)
    main = states[0]
    with path.open("wb") as fh:
        fh.write(_HEADER.pack(MAGIC, *grid.n, *grid.h, main.t, dt, main.step, len(states)))
        for s in states:
            for a in _state_arrays(s):
                fh.write(np.asarray(a, dtype="<f8").ravel(order="F").tobytes())
    side = {
        "schema_version": SCHEMA_VERSION,
        "grid": grid.to_dict(),
        "dt": dt,
        "t": main.t,
        "step": main.step,
        "n_states": len(states),
        "layout": "v_x v_y v_z vt_x vt_y vt_z h_x h_y h_z per state; float64 little-endian, x fastest",
        **sidecar,
    }
    path.with_suffix(".json").write_text(json.dumps(_clean(side), indent=2) + "\n")
    return path


def read_checkpoint(path, grid: Optional[Grid] = None) -> tuple[Grid, float, list[FieldState], dict]:
    path = Path(path)
    side = json.loads(path.with_suffix(".json").read_text())
    grid = grid or Grid.from_dict(side["grid"])
    raw = path.read_bytes()
    magic, nx, ny, nz, hx, hy, hz, t, dt, step, n_states = _HEADER.unpack_from(raw, 0)
    if magic != MAGIC:
        raise ValidationError(f"{path} is not a checkpoint file")
    if (nx, ny, nz) != grid.n:
        raise ValidationError("checkpoint dimensions do not match the grid")
    ops = Operators(grid)
    node_shape = grid.n
    face_shapes = [h.shape for h in ops.zeros_faces()]
    off = _HEADER.size
    states = []

    def take(shape):
        nonlocal off
        k = int(np.prod(shape))
        arr = np.frombuffer(raw, dtype="<f8", count=k, offset=off).reshape(shape, order="F").astype(float)
        off += 8 * k
        return arr

    for _ in range(n_states):
        v = np.stack([take(node_shape) for _ in range(3)])
        vt = np.stack([take(node_shape) for _ in range(3)])
        h = tuple(take(s) for s in face_shapes)
        states.append(FieldState(t, v, vt, h, int(step)))
    return grid, dt, states, side
