import json
import subprocess
import sys

import numpy as np
import pytest

from ineqgp import datasets
from ineqgp.cli import main
from ineqgp.io import read_csv, write_csv


@pytest.fixture
def toy_csv(tmp_path):
    toy = datasets.five_point_toy()
    path = tmp_path / "toy.csv"
    write_csv(path, ["x", "y"], [toy.x[:, 0], toy.y])
    return path


@pytest.fixture
def toy_model(tmp_path, toy_csv):
    out = tmp_path / "model.json"
    code = main(["fit", "--data", str(toy_csv), "--kernel", "matern52", "--knots", "30",
                 "--constraint", "bounds(-1,1)", "--fix", "sigma2=10", "--out", str(out)])
    assert code == 0
    return out


def test_fit_prints_parameters(tmp_path, toy_csv, capsys):
    out = tmp_path / "m.json"
    assert main(["fit", "--data", str(toy_csv), "--knots", "20", "--constraint", "bounds(-1,1)",
                 "--fix", "sigma2=10", "--out", str(out)]) == 0
    text = capsys.readouterr().out
    assert "sigma2 10" in text and "lengthscales" in text and "tau2" in text and "loglik" in text
    doc = json.loads(out.read_text())
    assert doc["version"] == 1 and doc["knots"] == [20]


def test_fit_with_config(tmp_path, toy_csv):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"schema_version": 1, "kernel": "se", "knots": [15],
                               "constraints": ["bounds(-1,1)"], "fixed": {"sigma2": 10}}))
    out = tmp_path / "m.json"
    assert main(["fit", "--data", str(toy_csv), "--config", str(cfg), "--out", str(out)]) == 0
    doc = json.loads(out.read_text())
    assert doc["kernel"]["family"] == "se" and doc["terms"] == ["bounds(-1,1)"]


def test_predict_columns_and_determinism(tmp_path, toy_model):
    outs = []
    for k in range(2):
        out = tmp_path / f"pred{k}.csv"
        assert main(["predict", "--model", str(toy_model), "--n-samples", "300", "--seed", "3",
                     "--resolution", "41", "--out", str(out)]) == 0
        outs.append(out.read_bytes())
    assert outs[0] == outs[1]
    header, data = read_csv(tmp_path / "pred0.csv")
    assert header == ["x1", "mean", "mode", "q_lo", "q_hi"]
    assert data.shape == (41, 5)
    assert np.all(data[:, 3] >= -1 - 1e-8) and np.all(data[:, 4] <= 1 + 1e-8)


@pytest.mark.parametrize("sampler", ["rsm", "gibbs", "hmc"])
def test_sample_wide_format(tmp_path, toy_model, sampler):
    pts = tmp_path / "pts.csv"
    write_csv(pts, ["x"], [np.linspace(0, 1, 7)])
    out = tmp_path / "s.csv"
    assert main(["sample", "--model", str(toy_model), "--sampler", sampler, "--points", str(pts),
                 "--n-samples", "12", "--thinning", "2", "--burn-in", "5", "--out", str(out)]) == 0
    header, data = read_csv(out)
    assert header == ["x1"] + [f"path{i}" for i in range(1, 13)]
    assert data.shape == (7, 13)
    assert np.abs(data[:, 1:]).max() <= 1 + 1e-8


def test_map_outputs(tmp_path, toy_model):
    out, knots = tmp_path / "map.csv", tmp_path / "knots.csv"
    assert main(["map", "--model", str(toy_model), "--resolution", "11", "--out", str(out),
                 "--knots-out", str(knots)]) == 0
    header, data = read_csv(out)
    assert header == ["x1", "mode", "mean"] and data.shape == (11, 3)
    header, data = read_csv(knots)
    assert header == ["x1", "mode"] and data.shape == (30, 2)


def test_diagnose_rsm_chain(tmp_path, toy_model, capsys):
    out, ess_out, trace = tmp_path / "d.json", tmp_path / "ess.csv", tmp_path / "trace.csv"
    n = 10_000
    assert main(["diagnose", "--model", str(toy_model), "--sampler", "rsm", "--n-samples", str(n),
                 "--out", str(out), "--ess-out", str(ess_out), "--trace-out", str(trace)]) == 0
    printed = json.loads(capsys.readouterr().out)
    assert "tn_ess" in printed and "wall_seconds" in printed
    doc = json.loads(out.read_text())
    assert "tn_ess" not in doc and "wall_seconds" not in doc
    assert doc["ess_q10"] >= 0.9 * n
    header, data = read_csv(ess_out)
    assert header == ["coordinate", "ess", "antithetic", "degenerate"]
    assert data.shape == (30, 4) and np.all((data[:, 1] >= 1) & (data[:, 1] <= n))
    _, tr = read_csv(trace)
    assert tr.shape == (n, 30)
    # the trace can be diagnosed on its own
    assert main(["diagnose", "--chain", str(trace), "--wall-seconds", "2"]) == 0


def test_diagnose_file_is_reproducible(tmp_path, toy_model):
    blobs = []
    for k in range(2):
        out = tmp_path / f"d{k}.json"
        assert main(["diagnose", "--model", str(toy_model), "--sampler", "hmc",
                     "--n-samples", "200", "--seed", "1", "--out", str(out)]) == 0
        blobs.append(out.read_bytes())
    assert blobs[0] == blobs[1]


@pytest.mark.filterwarnings("ignore::ineqgp.emulator.ObservationWarning")
def test_calibration_on_training_inputs(tmp_path):
    data = datasets.sigmoid_data(80, 0.02, seed=5)
    csv = tmp_path / "s.csv"
    write_csv(csv, ["x", "y"], [data.x[:, 0], data.y])
    model = tmp_path / "m.json"
    assert main(["fit", "--data", str(csv), "--kernel", "se", "--knots", "40",
                 "--constraint", "bounds(0,1)", "--constraint", "monotone(dim=1,up)",
                 "--minimal", "--out", str(model)]) == 0
    pts = tmp_path / "x.csv"
    write_csv(pts, ["x"], [data.x[:, 0]])
    out = tmp_path / "p.csv"
    assert main(["predict", "--model", str(model), "--points", str(pts), "--n-samples", "1000",
                 "--out", str(out)]) == 0
    tau = np.sqrt(json.loads(model.read_text())["tau2"])
    _, pred = read_csv(out)
    inside = np.abs(pred[:, 1] - data.y) <= 3 * tau
    assert inside.mean() >= 0.95


def test_exit_codes(tmp_path, toy_csv, toy_model, capsys):
    empty = tmp_path / "empty.csv"
    empty.write_text("")
    assert main(["fit", "--data", str(empty), "--out", str(tmp_path / "m.json")]) == 2
    assert "no observations" in capsys.readouterr().err
    headless = tmp_path / "headless.csv"
    headless.write_text("0,1\n1,2\n")
    assert main(["fit", "--data", str(headless), "--out", str(tmp_path / "m.json")]) == 2
    assert "line 1" in capsys.readouterr().err
    assert main(["fit", "--data", str(toy_csv), "--constraint", "wiggly",
                 "--out", str(tmp_path / "m.json")]) == 2
    assert main(["fit", "--data", str(toy_csv), "--fix", "sigma2",
                 "--out", str(tmp_path / "m.json")]) == 2
    assert main(["fit", "--data", str(tmp_path / "missing.csv"),
                 "--out", str(tmp_path / "m.json")]) == 2
    doc = json.loads(toy_model.read_text())
    doc["version"] = 7
    bad = tmp_path / "old.json"
    bad.write_text(json.dumps(doc))
    assert main(["map", "--model", str(bad), "--out", str(tmp_path / "x.csv")]) == 2
    assert "version" in capsys.readouterr().err
    assert main(["diagnose", "--out", str(tmp_path / "x.json")]) == 2
    with pytest.raises(SystemExit) as info:
        main(["demo", "no-such-demo"])
    assert info.value.code == 2
    assert "bounded-toy" in capsys.readouterr().err


def test_numeric_failure_exit_code(tmp_path, toy_csv, capsys):
    # noise-free data sitting on the lower bound leave a feasible set of zero width
    model = tmp_path / "m.json"
    assert main(["fit", "--data", str(toy_csv), "--knots", "100", "--constraint",
                 "bounds(-0.5,0.5)", "--fix", "sigma2=10", "--fix", "tau2=0",
                 "--out", str(model)]) == 0
    capsys.readouterr()
    code = main(["predict", "--model", str(model), "--sampler", "hmc", "--n-samples", "10",
                 "--out", str(tmp_path / "p.csv")])
    assert code == 1
    assert "numerical failure" in capsys.readouterr().err


def test_console_script_entry_point(tmp_path):
    res = subprocess.run([sys.executable, "-m", "ineqgp", "--help"], capture_output=True,
                         text=True, check=True)
    for name in ("fit", "predict", "sample", "map", "diagnose", "demo"):
        assert name in res.stdout
