import json

import numpy as np
import pytest

from mvlab.cli import main


@pytest.fixture(autouse=True)
def output_root(tmp_path, monkeypatch):
    monkeypatch.setenv("MVLAB_OUTPUT_ROOT", str(tmp_path / "runs"))
    return tmp_path / "runs"


def write(tmp_path, name, obj):
    p = tmp_path / name
    p.write_text(json.dumps(obj))
    return str(p)


def test_no_subcommand_is_usage_error(capsys):
    assert main([]) == 64
    assert "config schema" in capsys.readouterr().err


def test_bad_flag_is_usage_error():
    assert main(["distance", "--p", "3", "a", "b"]) == 64


def test_oracle_closed_form(capsys, tmp_path):
    assert main(["oracle", "--name", "counterexample-closed-form", "--t", "1"]) == 0
    assert "1.718281828459045" in capsys.readouterr().out
    out = tmp_path / "o.csv"
    assert main(["oracle", "--name", "picard-series", "--n", "3", "--out", str(out)]) == 0
    assert out.read_text().splitlines()[0] == "n,t,mean"


@pytest.mark.parametrize("name", ["example1-moment-ode", "example3-moment-ode", "atom-errors", "brute-force"])
def test_other_oracles_run(name):
    assert main(["oracle", "--name", name]) == 0


def test_experiment_control_row(tmp_path, output_root, capsys):
    cfg = write(tmp_path, "c.json", {
        "experiment": "solution_dependence",
        "family": {"name": "example1", "values": [1.0], "limit": 1.0},
        "integrator": {"N": 100, "dt": 0.01, "T": 0.1, "record_every": 5},
        "replicates": 1,
    })
    assert main(["experiment", "--config", cfg]) == 0
    (run,) = list(output_root.iterdir())
    lines = (run / "result.csv").read_text().splitlines()
    assert lines[0] == "experiment,param,time,statistic,value,mc_err"
    assert any(line.startswith("solution_dependence,1.0,0.1,path_sup_gap,0.0,") for line in lines)
    manifest = json.loads((run / "manifest.json").read_text())
    assert manifest["seed"] == 0 and len(manifest["config_hash"]) == 64
    # refusing to overwrite, then forcing
    assert main(["experiment", "--config", cfg]) == 1
    assert main(["experiment", "--config", cfg, "--force"]) == 0


def test_experiment_rejects_bad_config(tmp_path):
    cfg = write(tmp_path, "c.json", {"experiment": "picard", "integrator": {"dt": -1}})
    assert main(["experiment", "--config", cfg]) == 1
    assert main(["experiment", "--config", str(tmp_path / "none.json")]) == 1


def test_experiment_blowup_flag_exit_code(tmp_path):
    cfg = write(tmp_path, "c.json", {
        "experiment": "solution_dependence",
        "family": {"name": "example1", "values": [0.0], "limit": 1.0},
        "integrator": {"N": 50, "dt": 0.01, "T": 0.5, "record_every": 5, "blowup_threshold": 1.5},
        "init": {"kind": "gaussian", "var": 1.0},
        "replicates": 1,
    })
    assert main(["experiment", "--config", cfg, "--out", str(tmp_path / "o")]) == 2


def test_simulate_and_distance(tmp_path, capsys):
    out = tmp_path / "sim"
    args = ["simulate", "--model", "example2", "--param", "lambda=1.5", "--N", "64", "--T", "0.05", "--dt", "0.01"]
    assert main(args + ["--out", str(out)]) == 0
    snap = out / "snapshots.csv"
    assert snap.read_text().splitlines()[0] == "time,particle_index,x_0"
    assert (out / "summary.csv").exists()
    capsys.readouterr()
    assert main(["distance", str(snap), str(snap), "--p", "2"]) == 0
    assert capsys.readouterr().out.strip() == "0.0"


def test_distance_methods(tmp_path, capsys):
    rng = np.random.default_rng(0)
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    for p, x in ((a, rng.normal(size=(6, 2))), (b, rng.normal(size=(6, 2)))):
        p.write_text("x_0,x_1\n" + "\n".join(f"{float(r[0])!r},{float(r[1])!r}" for r in x) + "\n")
    vals = {}
    for m in ("auto", "assignment", "brute"):
        capsys.readouterr()
        assert main(["distance", str(a), str(b), "--method", m]) == 0
        vals[m] = float(capsys.readouterr().out)
    assert vals["auto"] == vals["assignment"] == pytest.approx(vals["brute"], rel=1e-12)
    assert main(["distance", str(a), str(b), "--method", "1d"]) == 1
    assert main(["distance", str(a), str(b), "--method", "sliced"]) == 0
    bad = tmp_path / "bad.csv"
    bad.write_text("x_0\nfoo\n")
    assert main(["distance", str(bad), str(a)]) == 1


def test_simulate_blowup_exit_code(tmp_path):
    args = ["simulate", "--model", "example1", "--param", "lambda=0", "--N", "20", "--T", "1", "--dt", "0.01"]
    cfg = write(tmp_path, "s.json", {"experiment": "simulate", "integrator": {"blowup_threshold": 1.0}})
    assert main(args + ["--config", cfg, "--out", str(tmp_path / "s")]) == 2


def test_check_subcommand(tmp_path, capsys):
    assert main(["check", "--suite", "example2-drift", "--suite", "example1-monotone-negative", "--out", str(tmp_path / "c")]) == 0
    reports = json.loads((tmp_path / "c" / "reports.json").read_text())
    assert [r["suite"] for r in reports] == ["example2-drift", "example1-monotone-negative"]
    cfg = write(tmp_path, "k.json", {"experiment": "check", "settings": {"suites": ["example3-monotone"]}})
    assert main(["check", "--config", cfg, "--out", str(tmp_path / "k")]) == 0
