import json
import os
import subprocess
import sys

import numpy as np
import pytest

from ncquapi import cli
from ncquapi.analysis import damped_cosine
from ncquapi.cli import ConfigError, load_config, main, parse_config, parse_matrix
from ncquapi.model import SIGMA_Y, SIGMA_Z
from ncquapi.propagator import Trajectory


def base_config(**numerics):
    num = {"dt": 0.5, "dj_max": 2, "t_max": 3.0}
    num.update(numerics)
    return {
        "engine": "two-bath",
        "system": {"delta": 1.0},
        "baths": {"bath1": {"gamma": 1 / 16, "omega_c": 10.0, "temperature": 0.2},
                  "bath2": {"gamma": 1 / 16, "omega_c": 10.0, "temperature": 0.2}},
        "numerics": num,
    }


def write(tmp_path, cfg, name="cfg.json"):
    p = tmp_path / name
    p.write_text(json.dumps(cfg))
    return str(p)


def test_parse_matrix_forms():
    assert np.array_equal(parse_matrix("sz", "x"), SIGMA_Z)
    m = parse_matrix([[0, [0, -1]], [[0, 1], 0]], "x")
    assert np.array_equal(m, SIGMA_Y)
    with pytest.raises(ConfigError, match="x"):
        parse_matrix([[1, 2, 3]], "x")
    with pytest.raises(ConfigError, match="shorthand"):
        parse_matrix("sq", "x")


@pytest.mark.parametrize("mutate,field", [
    (lambda c: c.update(bogus=1), "bogus"),
    (lambda c: c["numerics"].update(dt=-0.1), "numerics.dt"),
    (lambda c: c["numerics"].update(dj_max=0), "numerics.dj_max"),
    (lambda c: c["numerics"].update(dj_max=1.5), "numerics.dj_max"),
    (lambda c: c["baths"]["bath1"].update(temperature=0), "baths.bath1.temperature"),
    (lambda c: c["baths"]["bath2"].pop("gamma"), "baths.bath2.gamma"),
    (lambda c: c["system"].update(sigma1="sz"), "system"),
    (lambda c: c["system"].update(rho0=[[1, 0], [0, 1]]), "system"),
    (lambda c: c.update(engine="magic"), "engine"),
    (lambda c: c["baths"].pop("bath1"), "baths.bath1"),
])
def test_invalid_configs_name_the_field(mutate, field):
    cfg = base_config()
    mutate(cfg)
    with pytest.raises(ConfigError, match=field.replace(".", r"\.")):
        parse_config(cfg)


def test_invalid_config_exit_code(tmp_path, capsys):
    cfg = base_config(dt=-1.0)
    assert main(["run", "--config", write(tmp_path, cfg), "--out", str(tmp_path)]) == 2
    assert "numerics.dt" in capsys.readouterr().err
    assert not (tmp_path / "trajectory.csv").exists()
    assert main(["run", "--config", str(tmp_path / "missing.json")]) == 2
    (tmp_path / "bad.json").write_text("{")
    assert main(["run", "--config", str(tmp_path / "bad.json")]) == 2
    assert main(["frobnicate"]) == 2


def test_run_writes_outputs_and_reproduces(tmp_path):
    out1, out2 = tmp_path / "a", tmp_path / "b"
    assert main(["run", "--config", write(tmp_path, base_config()), "--out", str(out1)]) == 0
    meta = json.loads((out1 / "metadata.json").read_text())
    assert meta["run"]["tau_mem"] == pytest.approx(1.0)
    assert meta["run"]["max_trace_dev"] < 1e-12
    for key in ("wall_time", "peak_memory_estimate_bytes", "version"):
        assert key in meta["run"]
    tr = Trajectory.read_csv(out1 / "trajectory.csv")
    assert tr.times[-1] == pytest.approx(3.0)
    # the metadata file is itself a valid config that reproduces the run bitwise
    assert main(["run", "--config", str(out1 / "metadata.json"), "--out", str(out2)]) == 0
    assert (out1 / "trajectory.csv").read_bytes() == (out2 / "trajectory.csv").read_bytes()


def test_run_single_bath_and_brute_force(tmp_path):
    cfg = base_config()
    cfg["engine"] = "single-bath"
    del cfg["baths"]["bath1"]
    assert main(["run", "--config", write(tmp_path, cfg), "--out", str(tmp_path / "s")]) == 0
    cfg = base_config(dt=0.5, t_max=1.0)
    cfg["engine"] = "brute-force"
    assert main(["run", "--config", write(tmp_path, cfg), "--out", str(tmp_path / "b")]) == 0


def test_run_matrix_system_equals_shorthand(tmp_path):
    assert main(["run", "--config", write(tmp_path, base_config()), "--out", str(tmp_path / "a")]) == 0
    cfg = base_config()
    cfg["system"] = {"H_S": [[0, 0.5], [0.5, 0]], "sigma1": [[0, 1], [1, 0]], "sigma2": "sz",
                     "rho0": [[1, 0], [0, 0]]}
    assert main(["run", "--config", write(tmp_path, cfg), "--out", str(tmp_path / "b")]) == 0
    a = Trajectory.read_csv(tmp_path / "a" / "trajectory.csv")
    b = Trajectory.read_csv(tmp_path / "b" / "trajectory.csv")
    assert np.array_equal(a.rhos, b.rhos)


def test_run_trace_failure_exit_code(tmp_path, monkeypatch):
    monkeypatch.setattr(cli, "TRACE_FAIL", -1.0)
    assert main(["run", "--config", write(tmp_path, base_config()), "--out", str(tmp_path)]) == 3
    assert not (tmp_path / "trajectory.csv").exists()


def test_resource_cap(tmp_path, capsys):
    cfg = base_config(dj_max=12)
    assert main(["run", "--config", write(tmp_path, cfg), "--out", str(tmp_path)]) == 4
    cfg = base_config(t_max=5.0)
    cfg["engine"] = "brute-force"
    assert main(["run", "--config", write(tmp_path, cfg), "--out", str(tmp_path)]) == 4
    assert "cap" in capsys.readouterr().err
    assert os.listdir(tmp_path) == ["cfg.json"]


def test_sweep(tmp_path):
    cfg = base_config(t_max=4.0)
    cfg["grid"] = {"points": [[0.5, 2], [0.25, 4], [0.5, 3]]}
    assert main(["sweep", "--config", write(tmp_path, cfg), "--out", str(tmp_path)]) == 0
    rep = json.loads((tmp_path / "convergence.json").read_text())
    assert [g["tau_mem"] for g in rep["groups"]] == pytest.approx([1.0, 1.5])
    assert len([f for f in os.listdir(tmp_path) if f.startswith("run")]) == 3
    assert main(["report", str(tmp_path / "convergence.json")]) == 0


def test_sweep_single_point_and_tau_grid(tmp_path):
    cfg = base_config()
    cfg["grid"] = {"tau_mem": [1.0], "dj_max": [2]}
    assert main(["sweep", "--config", write(tmp_path, cfg), "--out", str(tmp_path)]) == 0
    rep = json.loads((tmp_path / "convergence.json").read_text())
    assert len(rep["groups"]) == 1 and rep["inter_group_deviations"] == []


def test_sweep_refuses_before_computing(tmp_path):
    cfg = base_config()
    cfg["grid"] = {"dt": [0.5], "dj_max": [2, 14]}
    assert main(["sweep", "--config", write(tmp_path, cfg), "--out", str(tmp_path)]) == 4
    assert os.listdir(tmp_path) == ["cfg.json"]
    cfg["grid"] = {"dj_max": [2]}
    assert main(["sweep", "--config", write(tmp_path, cfg), "--out", str(tmp_path)]) == 2


def test_sweep_parallel_matches_serial(tmp_path):
    cfg = base_config()
    cfg["grid"] = {"points": [[0.5, 1], [0.5, 2]]}
    assert main(["sweep", "--config", write(tmp_path, cfg), "--out", str(tmp_path / "s")]) == 0
    cfg["numerics"].update(deterministic=False, workers=2)
    assert main(["sweep", "--config", write(tmp_path, cfg), "--out", str(tmp_path / "p")]) == 0
    for f in os.listdir(tmp_path / "s"):
        if f.endswith(".csv"):
            a = Trajectory.read_csv(tmp_path / "s" / f)
            b = Trajectory.read_csv(tmp_path / "p" / f)
            assert np.max(np.abs(a.rhos - b.rhos)) < 1e-12


def test_oracle(tmp_path):
    cfg = base_config(dt=0.5, t_max=1.5)
    cfg["numerics"]["dj_max"] = 3
    assert main(["oracle", "--config", write(tmp_path, cfg), "--out", str(tmp_path)]) == 0
    res = json.loads((tmp_path / "oracle.json").read_text())
    assert res["overall_max_deviation"] < 1e-12 and res["within_threshold"]
    cfg["oracle"] = {"threshold": 0.0, "enforce": True}
    assert main(["oracle", "--config", write(tmp_path, cfg), "--out", str(tmp_path)]) == 3
    cfg["oracle"]["enforce"] = False
    assert main(["oracle", "--config", write(tmp_path, cfg), "--out", str(tmp_path)]) == 0
    assert main(["report", str(tmp_path / "oracle.json")]) == 0


def _csv(tmp_path, pz):
    t = np.arange(len(pz)) * 0.25
    eye = np.eye(2, dtype=complex)
    rhos = 0.5 * (eye[None] + np.asarray(pz)[:, None, None] * SIGMA_Z)
    p = tmp_path / "traj.csv"
    Trajectory(t, rhos).write_csv(p)
    return str(p), t


def test_fit_command(tmp_path, capsys):
    t = np.arange(0, 60, 0.25)
    p, _ = _csv(tmp_path, damped_cosine(t, 1.0, 0.1, 0.94, 0.0, 0.0))
    assert main(["fit", p, "--out", str(tmp_path)]) == 0
    res = json.loads((tmp_path / "fit.json").read_text())
    assert res["rate"] == pytest.approx(0.1, abs=1e-6)
    assert main(["fit", p, "--window", "5:50", "--output", str(tmp_path / "w.json")]) == 0
    assert json.loads((tmp_path / "w.json").read_text())["window"] == [5.0, 50.0]
    assert main(["report", str(tmp_path / "fit.json"), p]) == 0
    assert "rate" in capsys.readouterr().out


def test_fit_command_failures(tmp_path):
    p, _ = _csv(tmp_path, np.full(200, 0.4))
    assert main(["fit", p, "--out", str(tmp_path)]) == 3
    assert not (tmp_path / "fit.json").exists()
    assert main(["fit", p, "--window", "5-50"]) == 2
    bad = tmp_path / "bad.csv"
    bad.write_text("t,foo\n1,2\n")
    assert main(["fit", str(bad)]) == 2
    assert main(["fit", str(tmp_path / "nope.csv")]) == 2
    assert main(["report", str(bad)]) == 2


def test_report_metadata(tmp_path, capsys):
    assert main(["run", "--config", write(tmp_path, base_config()), "--out", str(tmp_path)]) == 0
    capsys.readouterr()
    assert main(["report", str(tmp_path / "metadata.json")]) == 0
    assert "tau_mem 1" in capsys.readouterr().out


def test_load_config_roundtrip(tmp_path):
    cfg = load_config(write(tmp_path, base_config()))
    again = parse_config(json.loads(json.dumps(cfg.to_dict())))
    assert again.to_dict() == cfg.to_dict()


def test_console_entry_point():
    r = subprocess.run([sys.executable, "-m", "ncquapi.cli", "--version"], capture_output=True, text=True)
    assert r.returncode == 0 and r.stdout.strip() == "0.1.0"
