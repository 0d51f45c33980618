import csv
import json
from pathlib import Path

import numpy as np
import pytest
import yaml

from magnetodecay import cli
from magnetodecay.io import read_csv

SCENARIOS = Path(__file__).resolve().parents[1] / "scenarios"

SMALL = {
    "schema_version": "1.0",
    "name": "small_box",
    "material": {"lambda": 0.5, "mu": 0.25, "B": [1.0, 0.3, 0.2]},
    "grid": {"extents": [3.0, 3.0, 3.0], "n": [10, 10, 10]},
    "solve": {
        "t_end": 12.0, "N": 1, "record_every": 2, "checkpoint_every": 20, "fit_window": [0.0, 12.0],
        "initial": {"v0": [{"k": [1, 1, 1], "amplitude": [1.0, 0.5, 0.3]}],
                    "v1": [{"k": [1, 2, 1], "amplitude": [0.2, -0.3, 0.5]}]},
    },
}


def _run(capsys, *argv):
    code = cli.main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, (json.loads(out) if code == 0 else None), err


def _small(tmp_path, **solve):
    doc = json.loads(json.dumps(SMALL))
    doc["solve"].update(solve)
    p = tmp_path / "small_box.yaml"
    p.write_text(yaml.safe_dump(doc))
    return p


def test_trace_diameter_bounce(tmp_path, capsys):
    code, summary, _ = _run(capsys, "trace", "--scenario", SCENARIOS / "ball_bounce.yaml", "--out", tmp_path)
    assert code == 0 and summary["events"] == 3
    with (tmp_path / "ray_events.csv").open() as fh:
        rows = list(csv.DictReader(line for line in fh if not line.startswith("#")))
    assert [r["kind"] for r in rows] == ["Reflect"] * 3
    ray = json.loads((tmp_path / "ray.json").read_text())
    assert [e["kind"] for e in ray["events"]] == ["Reflect"] * 3
    assert ray["life_length"] == pytest.approx(6.0)
    assert (tmp_path / "ray.png").exists() and (tmp_path / "run.log").exists()


def test_trace_glancing_start(tmp_path, capsys):
    code, _, _ = _run(capsys, "trace", "--scenario", SCENARIOS / "ball_glancing.yaml", "--out", tmp_path,
                      "--no-figures")
    assert code == 0
    ray = json.loads((tmp_path / "ray.json").read_text())
    assert [s["type"] for s in ray["segments"]] == ["boundary-geodesic"]
    assert ray["events"][0]["kind"] == "GlideStart"
    assert not (tmp_path / "ray.png").exists()


def test_invalid_material_exit_code(tmp_path, capsys):
    code, _, err = _run(capsys, "validate", "--scenario", SCENARIOS / "invalid_material.yaml", "--out", tmp_path)
    assert code == 2
    assert "lambda + mu != 0" in err


def test_missing_scenario_exit_code(tmp_path, capsys):
    code, _, err = _run(capsys, "validate", "--scenario", tmp_path / "none.yaml", "--out", tmp_path)
    assert code == 2 and "does not exist" in err


def test_bad_thread_count(tmp_path, capsys):
    code, _, _ = _run(capsys, "validate", "--scenario", SCENARIOS / "ball.yaml", "--threads", "0")
    assert code == 2


def test_validate(tmp_path, capsys):
    code, summary, _ = _run(capsys, "validate", "--scenario", SCENARIOS / "box_coupled.yaml", "--out", tmp_path)
    assert code == 0 and summary["valid"] and summary["checked"] == ["material", "grid", "solver"]
    assert summary["outputs"] == []


@pytest.mark.parametrize("name, kind, K", [("ball", "Polynomial", 2), ("quartic", "Polynomial", 4)])
def test_classify(tmp_path, capsys, name, kind, K):
    code, summary, _ = _run(capsys, "classify", "--scenario", SCENARIOS / f"{name}.yaml", "--out", tmp_path)
    assert code == 0 and summary["kind"] == kind and summary["K"] == K
    v = json.loads((tmp_path / "verdict.json").read_text())
    assert v["certified"] and v["K"] == K and v["witnesses"][0]["type"] == "shadow_curve"
    assert (tmp_path / "shadow_curves.png").exists()


def test_classify_trivial_budget(tmp_path, capsys):
    code, summary, _ = _run(capsys, "classify", "--scenario", SCENARIOS / "ball_trivial_budget.yaml",
                            "--out", tmp_path, "--no-figures")
    assert code == 0 and summary["kind"] == "Uniform"
    v = json.loads((tmp_path / "verdict.json").read_text())
    assert v["L"] == 0.0 and not v["certified"] and "no witness found up to budget" in v["notes"]


def test_simulate_zero_field_is_degenerate(tmp_path, capsys):
    code, summary, _ = _run(capsys, "simulate", "--scenario", SCENARIOS / "box_b_zero.yaml", "--out", tmp_path,
                            "--no-figures")
    assert code == 0 and summary["chosen"] is None
    fit = json.loads((tmp_path / "fit.json").read_text())
    assert fit["fit"] is None and "constant" in fit["degenerate"]
    assert fit["relative_drift"] <= 1e-10


def test_simulate_outputs_and_report(tmp_path, capsys):
    scn = _small(tmp_path)
    verdict = tmp_path / "verdict.json"
    verdict.write_text(json.dumps({"kind": "Polynomial", "K": 2, "certified": True}))
    out = tmp_path / "run"
    code, summary, _ = _run(capsys, "simulate", "--scenario", scn, "--out", out, "--verdict", verdict)
    assert code == 0
    meta, header, data = read_csv(out / "energy.csv")
    assert header[-1] == "E_1" and meta["scenario"] == "small_box"
    E = data[:, header.index("E")]
    assert np.all(np.diff(E) <= 1e-12 * E[0])
    np.testing.assert_allclose(data[:, 2:6].sum(axis=1), E, rtol=1e-12)
    report = json.loads((out / "report.json").read_text())
    assert report["verdict"]["K"] == 2 and isinstance(report["consistent"], bool)
    assert report["chosen"] == json.loads((out / "fit.json").read_text())["fit"]["chosen"]
    assert sorted(p.name for p in (out / "checkpoints").glob("*.bin"))[0] == "state_00000020.bin"
    assert (out / "energy.png").exists()


def test_report_without_fit_explains(tmp_path, capsys):
    verdict = tmp_path / "verdict.json"
    verdict.write_text(json.dumps({"kind": "Uniform", "L": 0.0, "certified": False}))
    code, _, _ = _run(capsys, "simulate", "--scenario", SCENARIOS / "box_b_zero.yaml", "--out", tmp_path,
                      "--no-figures", "--verdict", verdict)
    assert code == 0
    report = json.loads((tmp_path / "report.json").read_text())
    assert report["consistent"] is None and "constant" in report["reasons"][0]


def test_restart_is_bit_identical(tmp_path, capsys):
    scn = _small(tmp_path)
    full, part = tmp_path / "full", tmp_path / "part"
    assert _run(capsys, "simulate", "--scenario", scn, "--out", full, "--no-figures")[0] == 0
    ckpts = sorted((full / "checkpoints").glob("*.bin"))
    assert len(ckpts) >= 2
    code, _, _ = _run(capsys, "simulate", "--scenario", scn, "--out", part, "--no-figures", "--restart", ckpts[1])
    assert code == 0
    _, _, a = read_csv(full / "energy.csv")
    _, _, b = read_csv(part / "energy.csv")
    assert np.array_equal(a[-len(b):], b)
    assert b[0, 0] == pytest.approx(a[-len(b), 0])


def test_restart_rejects_other_scenario(tmp_path, capsys):
    scn = _small(tmp_path)
    assert _run(capsys, "simulate", "--scenario", scn, "--out", tmp_path / "a", "--no-figures")[0] == 0
    ckpt = sorted((tmp_path / "a" / "checkpoints").glob("*.bin"))[0]
    other = _small(tmp_path, t_end=14.0)
    code, _, err = _run(capsys, "simulate", "--scenario", other, "--out", tmp_path / "b", "--restart", ckpt)
    assert code == 2 and "different scenario" in err


def test_reruns_are_byte_identical(tmp_path, capsys):
    scn = _small(tmp_path, t_end=2.0, checkpoint_every=0)
    for d in ("one", "two"):
        assert _run(capsys, "simulate", "--scenario", scn, "--out", tmp_path / d)[0] == 0
    for name in ("energy.csv", "fit.json", "energy.png"):
        assert (tmp_path / "one" / name).read_bytes() == (tmp_path / "two" / name).read_bytes()


def test_output_dir_from_environment(tmp_path, capsys, monkeypatch):
    monkeypatch.setenv(cli.OUT_ENV, str(tmp_path / "env"))
    code, _, _ = _run(capsys, "trace", "--scenario", SCENARIOS / "ball_bounce.yaml", "--no-figures")
    assert code == 0 and (tmp_path / "env" / "ray.json").exists()


def test_seed_override_recorded(tmp_path, capsys):
    code, summary, _ = _run(capsys, "trace", "--scenario", SCENARIOS / "ball_bounce.yaml", "--out", tmp_path,
                            "--no-figures", "--seed", "11")
    assert code == 0
    assert json.loads((tmp_path / "ray.json").read_text())["provenance"]["rng_seed"] == 11


def test_observability_field_aligned_is_zero(tmp_path, capsys):
    code, summary, _ = _run(capsys, "observability", "--scenario", SCENARIOS / "box_parallel.yaml",
                            "--out", tmp_path)
    assert code == 0 and summary["Q"] == 0.0
    d = json.loads((tmp_path / "observability.json").read_text())
    assert d["Q_by_N"] == [0.0, 0.0, 0.0] and d["lhs"] > 0


def test_observability_box(tmp_path, capsys):
    code, summary, _ = _run(capsys, "observability", "--scenario", SCENARIOS / "box_observability.yaml",
                            "--out", tmp_path)
    assert code == 0 and summary["Q"] > 0
    d = json.loads((tmp_path / "observability.json").read_text())
    assert d["Q_by_N"] == sorted(d["Q_by_N"])
