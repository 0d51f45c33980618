import json

import numpy as np
import pytest
import yaml

from magnetodecay.errors import ValidationError
from magnetodecay.grid import DIRICHLET, PERIODIC, Grid
from magnetodecay.io import (
    _HEADER,
    content_hash,
    energy_columns,
    provenance,
    read_checkpoint,
    read_csv,
    write_checkpoint,
    write_csv,
    write_json,
)
from magnetodecay.material import Material
from magnetodecay.scenario import Scenario
from magnetodecay.solver import MagnetoSolver, modal_field

BASE = {
    "name": "t",
    "material": {"lambda": 1.0, "mu": 1.0, "B": [1, 0, 0]},
    "grid": {"extents": [1, 1, 1], "n": [8, 8, 8]},
    "solve": {"t_end": 1.0},
}


# -- scenarios ----------------------------------------------------------------


def test_defaults_do_not_change_hash():
    explicit = {**BASE, "schema_version": "1.0", "rng_seed": 0,
                "solve": {"t_end": 1.0, "theta": 0.5, "coupled": True, "N": 0}}
    assert Scenario.from_dict(BASE).hash == Scenario.from_dict(explicit).hash


def test_hash_is_key_order_independent():
    reordered = dict(reversed(list(BASE.items())))
    assert Scenario.from_dict(BASE).hash == Scenario.from_dict(reordered).hash
    assert Scenario.from_dict(BASE).hash != Scenario.from_dict({**BASE, "rng_seed": 1}).hash


def test_seed_override():
    s = Scenario.from_dict(BASE).with_seed(7)
    assert s.rng_seed == 7 and s.hash == Scenario.from_dict({**BASE, "rng_seed": 7}).hash


@pytest.mark.parametrize("patch, fragment", [
    ({"bogus": 1}, "unknown scenario keys"),
    ({"schema_version": "2.0"}, "schema_version"),
    ({"name": ""}, "name"),
    ({"solve": {"t_end": -1.0}}, "t_end"),
    ({"solve": {"t_end": 1.0, "theta": 0.3}}, "theta"),
    ({"solve": {"t_end": 1.0, "record_every": 3, "checkpoint_every": 10}}, "multiple of record_every"),
    ({"material": {"lambda": -1.0, "mu": 1.0}}, "lambda \\+ mu"),
    ({"grid": {"extents": [1, 1, 1], "n": [8, 8, 8], "bc": ["periodic"] * 3}}, "Dirichlet"),
    ({"search": {"tol_parallel": 0.5}}, "tol_parallel"),
    ({"trace": {"position": [0, 0, 0], "direction": [0, 0, 0]}}, "direction"),
])
def test_validation_errors(patch, fragment):
    with pytest.raises(ValidationError, match=fragment):
        Scenario.from_dict({**BASE, "domain": {"family": "ball"}, **patch})


def test_load_missing_and_bad_yaml(tmp_path):
    with pytest.raises(ValidationError, match="does not exist"):
        Scenario.load(tmp_path / "nope.yaml")
    bad = tmp_path / "bad.yaml"
    bad.write_text("name: [unclosed\n")
    with pytest.raises(ValidationError, match="YAML"):
        Scenario.load(bad)


def test_shipped_scenarios_load():
    from pathlib import Path

    for path in sorted((Path(__file__).resolve().parents[1] / "scenarios").glob("*.yaml")):
        if path.stem == "invalid_material":
            with pytest.raises(ValidationError):
                Scenario.load(path)
        else:
            assert Scenario.load(path).name == path.stem


# -- JSON / CSV ---------------------------------------------------------------


def test_json_provenance_and_non_finite(tmp_path):
    prov = provenance("abc", 3, "t")
    p = write_json(tmp_path / "x.json", {"a": float("inf"), "b": [np.float64(1.5), float("nan")]}, prov)
    d = json.loads(p.read_text())
    assert d["a"] == "inf" and d["b"] == [1.5, "nan"]
    assert d["provenance"]["scenario_hash"] == "abc" and d["provenance"]["rng_seed"] == 3
    assert "tool_version" in d["provenance"]


def test_csv_round_trip_is_exact(tmp_path, rng):
    rows = rng.normal(size=(17, 3)) * 10.0 ** rng.integers(-300, 300, size=(17, 3))
    p = write_csv(tmp_path / "x.csv", ["a", "b", "c"], rows.tolist(), provenance("h", 0, "t"))
    meta, header, data = read_csv(p)
    assert header == ["a", "b", "c"] and meta["scenario_hash"] == "h"
    assert np.array_equal(data, rows)


def test_energy_columns():
    assert energy_columns(2)[-2:] == ["E_1", "E_2"]
    assert energy_columns(0)[:2] == ["t", "E"]


def test_content_hash_stable():
    assert content_hash({"b": 1, "a": [1.0, 2]}) == content_hash({"a": [1.0, 2], "b": 1})


# -- checkpoints --------------------------------------------------------------


@pytest.mark.parametrize("grid", [Grid((2.0, 1.0, 1.5), (9, 10, 8)),
                                  Grid((2.0, 1.0, 1.0), (12, 8, 1), (DIRICHLET, PERIODIC, PERIODIC))])
def test_checkpoint_round_trip(tmp_path, grid):
    s = MagnetoSolver(grid, Material(0.5, 0.25, B=(1.0, 0.3, 0.2)))
    st = s.initial_state(modal_field(grid, [{"k": [1, 1, 1], "amplitude": [1.0, 0.5, 0.3]}]),
                         modal_field(grid, [{"k": [2, 1, 1], "amplitude": [0.1, 0.2, 0.3]}]))
    for _ in range(3):
        st = s.step_magneto(st)
    path = write_checkpoint(tmp_path / "c.bin", grid, s.dt, [st, st.reversed(s.dt)], {"note": "x"})
    g2, dt, states, side = read_checkpoint(path)
    assert g2 == grid and dt == s.dt and side["note"] == "x" and side["step"] == 3
    assert len(states) == 2
    for a, b in zip(states, [st, st.reversed(s.dt)]):
        assert np.array_equal(a.v, b.v) and np.array_equal(a.vt, b.vt)
        assert all(np.array_equal(x, y) for x, y in zip(a.h, b.h))
    # documented header layout and file size
    raw = path.read_bytes()
    fields = _HEADER.unpack_from(raw, 0)
    assert fields[0] == b"MGDCKPT1" and fields[1:4] == grid.n and fields[-1] == 2
    n_face = sum(int(np.prod(x.shape)) for x in st.h)
    assert len(raw) == _HEADER.size + 2 * 8 * (6 * int(np.prod(grid.n)) + n_face)


def test_checkpoint_rejects_wrong_grid(tmp_path):
    grid = Grid((1.0, 1.0, 1.0), (8, 8, 8))
    s = MagnetoSolver(grid, Material(1.0, 1.0))
    st = s.initial_state(np.zeros((3, 8, 8, 8)), np.zeros((3, 8, 8, 8)))
    path = write_checkpoint(tmp_path / "c.bin", grid, s.dt, [st], {})
    with pytest.raises(ValidationError):
        read_checkpoint(path, Grid((1.0, 1.0, 1.0), (9, 8, 8)))
