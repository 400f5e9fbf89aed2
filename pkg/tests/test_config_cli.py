import json
import os
import subprocess
import sys

import numpy as np
import pytest

from fockrage import cli
from fockrage.config import ExperimentConfig
from fockrage.errors import InputError
from fockrage.io import read_csv, write_csv
from fockrage.onebody import LatticeSpec, build_lattice_one_body, shift_spectrum


def _write(tmp_path, data, name="cfg.json"):
    p = tmp_path / name
    p.write_text(json.dumps(data))
    return p


def _model(L=4, N=2, stat="boson", inter=None, **lat):
    m = {"lattice": {"length": L, **lat}, "statistics": stat, "N": N}
    if inter is not None:
        m["interaction"] = inter
    return m


def _run(tmp_path, command, data, *extra, name="cfg.json"):
    path = _write(tmp_path, data, name)
    out = tmp_path / "out"
    code = cli.main([command, "--config", str(path), "--out", str(out), *extra])
    return code, out


def _rows(path):
    meta, cols, rows = read_csv(path)
    return meta, cols, rows


# ------------------------------------------------------------------ config

def test_config_round_trip():
    data = {"command": "evolve", "model": _model(inter={"kind": "exponential", "g": 0.3, "a": 1.5},
                                                 wells=[[1, -2.0]]),
            "run": {"T": 2.0, "state": {"kind": "random", "rank": 2}}, "seed": 7}
    cfg = ExperimentConfig.from_dict(data)
    again = ExperimentConfig.from_dict(json.loads(cfg.dumps()))
    assert again.dumps() == cfg.dumps()
    assert again.to_dict()["model"]["lattice"]["wells"] == [[1, -2.0]]
    assert cfg.replace(seed=3).seed == 3


@pytest.mark.parametrize("bad", [
    {},
    {"model": {"lattice": {"length": 1}}},
    {"model": {"lattice": {"length": 4}, "N": -1}},
    {"model": {"lattice": {"length": 4}, "statistics": "anyon"}},
    {"model": {"lattice": {"length": 4}, "interaction": {"kind": "contact"}}},
    {"model": {"lattice": {"length": 4}, "interaction": {"kind": "exponential", "g": 1.0}}},
    {"model": {"lattice": {"length": 4, "potential": [0.0, 1.0]}}},
    {"model": {"lattice": {"length": 4, "wells": [[9, -1.0]]}}},
    {"model": {"lattice": {"length": 4}}, "extra": 1},
])
def test_schema_rejections(bad):
    with pytest.raises(InputError):
        ExperimentConfig.from_dict(bad)


def test_operators_shifted():
    cfg = ExperimentConfig.from_dict({"model": _model(L=5, potential=[0, -3, 0, 1, 0])})
    h, w = cfg.operators()
    assert np.linalg.eigvalsh(h.matrix).min() == pytest.approx(1.1)
    assert w is None or abs(w.matrix).max() == 0


def test_io_csv_round_trip(tmp_path):
    vals = [0.1, 1 / 3, -2.5e-17, 12345.678901234567]
    write_csv(tmp_path / "x.csv", ["i", "v"], list(enumerate(vals)), {"b": "2", "a": "1"})
    meta, cols, rows = read_csv(tmp_path / "x.csv")
    assert meta == {"a": "1", "b": "2"} and cols == ["i", "v"]
    assert [float(r[1]) for r in rows] == vals


# ------------------------------------------------------------------ exit codes

def test_invalid_json_exit_2(tmp_path, capsys):
    p = tmp_path / "bad.json"
    p.write_text("{not json")
    assert cli.main(["spectrum", "--config", str(p)]) == 2
    assert "not valid JSON" in capsys.readouterr().err


def test_schema_error_exit_2(tmp_path):
    code, _ = _run(tmp_path, "spectrum", {"model": {"lattice": {"length": 0}}})
    assert code == 2


def test_missing_file_exit_2(tmp_path):
    assert cli.main(["spectrum", "--config", str(tmp_path / "nope.json")]) == 2


def test_capacity_exit_3(tmp_path, capsys):
    code, _ = _run(tmp_path, "spectrum", {"model": _model(L=40, N=4), "run": {"max_dim": 1000}})
    assert code == 3
    err = capsys.readouterr().err
    assert "sector dimensions" in err and "n=4: 123410" in err


def test_accuracy_exit_4(tmp_path):
    data = {"model": _model(L=4, N=2, inter={"kind": "contact", "g": 0.5}),
            "run": {"T": 1.0, "step": 0.25, "tol": 1e-14}}
    code, _ = _run(tmp_path, "bbgky", data)
    assert code == 4


def test_command_mismatch_exit_2(tmp_path):
    code, _ = _run(tmp_path, "spectrum", {"command": "evolve", "model": _model()})
    assert code == 2


# ------------------------------------------------------------------ spectrum

def test_spectrum_two_site_fermion_pair(tmp_path):
    data = {"model": _model(L=2, N=2, stat="fermion", inter={"kind": "contact", "g": 0.7},
                            potential=[0.3, -0.4])}
    code, out = _run(tmp_path, "spectrum", data)
    assert code == 0
    _, cols, rows = _rows(out / "spectrum.csv")
    assert cols == ["n", "index", "eigenvalue"]
    two = [r for r in rows if r[0] == "2"]
    assert len(two) == 1
    h, w = ExperimentConfig.from_dict(data).operators()
    expected = h.matrix[0, 0].real + h.matrix[1, 1].real + w.matrix[0, 1].real
    assert float(two[0][2]) == pytest.approx(expected, abs=1e-12)


def test_spectrum_free_bosons_are_sums(tmp_path):
    code, out = _run(tmp_path, "spectrum", {"model": _model(L=5, N=2), "run": {"sectors": [2]}})
    assert code == 0
    e = np.linalg.eigvalsh(shift_spectrum(build_lattice_one_body(LatticeSpec(5))).matrix)
    sums = np.sort([e[i] + e[j] for i in range(5) for j in range(i, 5)])
    got = np.array([float(r[2]) for r in _rows(out / "spectrum.csv")[2]])
    np.testing.assert_allclose(got, sums, atol=1e-12)
    clusters = json.loads((out / "clusters.json").read_text())
    assert clusters["sectors"][0]["dimension"] == 15


def test_rerun_byte_identical(tmp_path):
    data = {"model": _model(L=4, N=2, inter={"kind": "contact", "g": 0.5}),
            "run": {"T": 1.0, "points": 3}}
    _, out = _run(tmp_path, "evolve", data)
    first = {p.name: p.read_bytes() for p in out.iterdir()}
    _, out = _run(tmp_path, "evolve", data)
    assert {p.name: p.read_bytes() for p in out.iterdir()} == first


def test_output_formats_respected(tmp_path):
    data = {"model": _model(L=3, N=1), "output": {"formats": ["json"]}}
    _, out = _run(tmp_path, "spectrum", data)
    assert sorted(p.name for p in out.iterdir()) == ["clusters.json"]


def test_env_out_overrides(tmp_path, monkeypatch):
    monkeypatch.setenv("FOCKRAGE_OUT", str(tmp_path / "env"))
    code, out = _run(tmp_path, "spectrum", {"model": _model(L=3, N=1)})
    assert code == 0
    assert (tmp_path / "env" / "spectrum.csv").exists() and not out.exists()


def test_seed_override(tmp_path):
    data = {"model": _model(L=3, N=2), "run": {"T": 0.0, "points": 1}, "seed": 1}
    vals = []
    for seed in ("5", "5", "6"):
        _, out = _run(tmp_path, "evolve", data, "--seed", seed)
        meta, _, rows = _rows(out / "evolution.csv")
        vals.append([r[2] for r in rows if r[1].startswith("density")])
    assert vals[0] == vals[1] != vals[2]


def test_workers_multiple_configs(tmp_path):
    paths = [_write(tmp_path, {"model": _model(L=L, N=1)}, f"c{L}.json") for L in (3, 4)]
    args = ["spectrum", "--workers", "2", "--out", str(tmp_path / "o")]
    for p in paths:
        args += ["--config", str(p)]
    assert cli.main(args) == 0
    for L in (3, 4):
        rows = _rows(tmp_path / "o" / f"c{L}" / "spectrum.csv")[2]
        assert sum(r[0] == "1" for r in rows) == L


def test_console_entry_point(tmp_path):
    p = _write(tmp_path, {"model": _model(L=3, N=1)})
    res = subprocess.run([sys.executable, "-m", "fockrage.cli", "spectrum", "--config", str(p),
                          "--out", str(tmp_path / "m")], capture_output=True, text=True,
                         env={**os.environ, "FOCKRAGE_OUT": ""})
    assert res.returncode == 0, res.stderr
    assert (tmp_path / "m" / "spectrum.csv").exists()


# ------------------------------------------------------------------ dynamics pipelines

def test_evolve_conserves(tmp_path):
    data = {"model": _model(L=4, N=2, inter={"kind": "exponential", "g": 0.4, "a": 1.0}),
            "run": {"T": 3.0, "points": 4, "state": {"kind": "random", "rank": 3}}}
    _, out = _run(tmp_path, "evolve", data)
    summary = json.loads((out / "evolution.json").read_text())
    assert summary["max_trace_drift"] < 1e-12
    assert summary["max_energy_drift"] < 1e-10
    assert summary["min_eigenvalue"] > -1e-10


def test_ergodic_eigenstate_constant(tmp_path):
    data = {"model": _model(L=4, N=2, inter={"kind": "contact", "g": 0.5}, wells=[[1, -3.0]]),
            "run": {"T_list": [1.0, 10.0, 100.0],
                    "state": {"kind": "eigenstate", "sector": 2, "index": 0}}}
    code, out = _run(tmp_path, "ergodic", data)
    assert code == 0
    _, _, rows = _rows(out / "pairings.csv")
    series = {}
    for T, lab, re, _ in rows:
        series.setdefault(lab, []).append(float(re))
    gaps = series.pop("weak_star_gap")
    assert max(gaps) < 1e-12
    for vals in series.values():
        assert max(vals) - min(vals) < 1e-12


def test_ergodic_two_level_half(tmp_path):
    data = {"model": _model(L=2, N=1),
            "run": {"T_list": [100.0, 1000.0, 10000.0],
                    "state": {"kind": "vector", "sector": 1, "vector": [1.0, 0.0]}}}
    code, out = _run(tmp_path, "ergodic", data)
    assert code == 0
    rep = json.loads((out / "limit_report.json").read_text())
    g1 = np.array(rep["candidate_blocks"][1])[..., 0]
    np.testing.assert_allclose(np.diag(g1), [0.5, 0.5], atol=1e-3)


def test_bbgky_tables(tmp_path):
    data = {"model": _model(L=3, N=2, inter={"kind": "contact", "g": 0.5}),
            "run": {"T": 1.0, "step": 1e-2, "tol": 1e-6, "convergence_steps": [0.1, 0.05],
                    "state": {"kind": "random", "sector": 2}}}
    code, out = _run(tmp_path, "bbgky", data)
    assert code == 0
    s = json.loads((out / "bbgky_summary.json").read_text())
    assert s["max_trace_distance_to_exact"] < 1e-6
    for row in s["residual_halving"][1:]:
        assert 3.5 <= row["ratio"] <= 4.5
    assert 12.0 <= s["step_convergence"][1]["ratio"] <= 20.0
    _, cols, rows = _rows(out / "trajectory.csv")
    assert cols == ["t", "n", "p", "q", "re", "im"] and rows


def test_rage_classic_decreasing(tmp_path):
    data = {"model": _model(L=2, N=1), "run": {"L_values": [8, 16, 32], "T": 200.0}}
    code, out = _run(tmp_path, "rage-classic", data)
    assert code == 0
    assert json.loads((out / "rage_classic.json").read_text())["decreasing"] is True


def test_rage_escape_cli(tmp_path):
    data = {"model": _model(L=32, N=2, inter={"kind": "contact", "g": 0.3})}
    code, out = _run(tmp_path, "rage-escape", data)
    assert code == 0
    rep = json.loads((out / "escape_report.json").read_text())
    assert rep["bound_overlap_fraction"] > 0.98
    assert rep["lost"] is True
    assert sum(rep["block_traces"]) == pytest.approx(1.0, abs=1e-6)
