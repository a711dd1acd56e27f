import json
import subprocess
import sys

import numpy as np
import pytest

from prodreg_em.cli import main
from prodreg_em.dataio import read_data_csv, write_data_csv
from prodreg_em.em import EmConfig, fit
from prodreg_em.estep import Method
from prodreg_em.model import ModelSpec, design_matrix

from conftest import random_theta, simulate
from oracles import ols


def _write_fixture(tmp_path, rng, spec, n=80, mdp3_share=0.0):
    th = random_theta(rng, spec)
    y, X = simulate(rng, spec, th, n)
    if mdp3_share:
        rows = rng.random(n) < mdp3_share
        X[np.ix_(rows, [0, 1])] = np.nan
    data = tmp_path / "data.csv"
    write_data_csv(data, y, X)
    model = tmp_path / "model.json"
    model.write_text(json.dumps(spec.to_json()))
    return data, model


def _run(*args):
    return subprocess.run([sys.executable, "-m", "prodreg_em", *map(str, args)],
                          capture_output=True, text=True)


def test_fit_complete_data_matches_ols(tmp_path, rng, spec3, capsys):
    data, model = _write_fixture(tmp_path, rng, spec3)
    out = tmp_path / "fit.json"
    assert main(["fit", "--data", str(data), "--model", str(model), "--out", str(out)]) == 0
    doc = json.loads(out.read_text())
    y, X, _ = read_data_csv(data)
    beta, _ = ols(design_matrix(spec3, X), y)
    assert np.allclose(doc["theta"]["beta"], beta, rtol=1e-8, atol=1e-10)
    printed = capsys.readouterr().out.splitlines()[1:1 + spec3.d]
    shown = [float(line.split()[1]) for line in printed]
    assert np.allclose(shown, beta, rtol=1e-8, atol=1e-10)
    assert doc["convergence"]["converged"]


def test_fit_output_equals_library_call(tmp_path, rng, spec3):
    data, model = _write_fixture(tmp_path, rng, spec3, mdp3_share=0.2)
    out = tmp_path / "fit.json"
    main(["fit", "--data", str(data), "--model", str(model), "--method", "ni", "--out", str(out)])
    y, X, _ = read_data_csv(data)
    lib = fit(spec3, y, X, EmConfig(Method.NI))
    doc = json.loads(out.read_text())
    assert doc["theta"] == lib.theta.to_json()
    assert doc["convergence"]["iterations"] == lib.iterations


def test_hyb_and_ni_identical_on_mdp3_fixture(tmp_path, rng, spec3, capsys):
    data, model = _write_fixture(tmp_path, rng, spec3, mdp3_share=0.3)
    docs = []
    for method in ("hyb", "ni"):
        out = tmp_path / f"{method}.json"
        assert main(["fit", "--data", str(data), "--model", str(model), "--method", method,
                     "--boot", "10", "--seed", "4", "--out", str(out), "--threads", "1"]) == 0
        doc = json.loads(out.read_text())
        doc.pop("method")
        docs.append(doc)
    assert docs[0] == docs[1]
    assert "ci_low" in docs[0]["coefficients"][0]


def test_fit_without_seed_prints_one(tmp_path, rng, spec3):
    data, model = _write_fixture(tmp_path, rng, spec3, n=40)
    res = _run("fit", "--data", data, "--model", model, "--boot", "3", "--threads", "1")
    assert res.returncode == 0
    assert res.stderr.startswith("seed: ")


def test_missing_model_is_usage_error(tmp_path):
    res = _run("fit", "--data", tmp_path / "x.csv")
    assert res.returncode == 2


def test_bad_inputs_exit_1(tmp_path, rng, spec3):
    data, model = _write_fixture(tmp_path, rng, spec3, n=20)
    other = tmp_path / "m4.json"
    other.write_text(json.dumps({"p": 4, "pairs": [[0, 1]]}))
    assert main(["fit", "--data", str(data), "--model", str(other)]) == 1
    assert main(["fit", "--data", str(tmp_path / "none.csv"), "--model", str(model)]) == 1
    broken = tmp_path / "broken.csv"
    broken.write_text("y,a,b,c\n1,2\n")
    assert main(["fit", "--data", str(broken), "--model", str(model)]) == 1


def _sim_config(tmp_path, conditions, **extra):
    cfg = {"conditions": conditions, "seed": 11, "zeta": 0.7,
           "em": {"tol": 1e-6, "max_iter": 500}, "bootstrap": {"B": 3, "level": 0.95}}
    cfg.update(extra)
    path = tmp_path / "sim.json"
    path.write_text(json.dumps(cfg))
    return path


def test_simulate_rows_and_repeatable_bytes(tmp_path):
    cfg = _sim_config(tmp_path, {"n": [60], "p": [3], "phi_mis": [0.2], "phi_mdp3": [0.5]})
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    for out in (a, b):
        assert main(["simulate", "--config", str(cfg), "--reps", "2", "--out", str(out),
                     "--threads", "1", "--no-timing"]) == 0
    lines = a.read_text().splitlines()
    d = 1 + 3 + 1
    assert len(lines) - 1 == 2 * d * 2
    assert a.read_bytes() == b.read_bytes()


def test_simulate_skips_invalid_conditions(tmp_path, capsys):
    cfg = _sim_config(tmp_path, {"n": [50], "p": [2, 3], "phi_mis": [0.2], "phi_mdp3": [0.0]})
    out = tmp_path / "r.csv"
    assert main(["simulate", "--config", str(cfg), "--reps", "1", "--out", str(out),
                 "--threads", "1", "--no-timing"]) == 0
    assert "skipping condition" in capsys.readouterr().err
    bad = _sim_config(tmp_path, {"n": [50], "p": [2], "phi_mis": [0.2], "phi_mdp3": [0.0]})
    assert main(["simulate", "--config", str(bad), "--reps", "1", "--out", str(out)]) == 1


def test_ni_demo_table(capsys):
    assert main(["ni-demo", "--max-dim", "5", "--tol", "0.01"]) == 0
    rows = [line.split() for line in capsys.readouterr().out.splitlines()[1:]]
    totals = [int(r[2]) for r in rows]
    assert totals[0] == 10
    assert 1.5e5 <= totals[3] <= 2.5e5
    assert 5e6 <= totals[4] <= 8e6


def test_report_command(tmp_path):
    cfg = _sim_config(tmp_path, {"n": [60], "p": [3], "phi_mis": [0.2], "phi_mdp3": [0.0]})
    results = tmp_path / "r.csv"
    main(["simulate", "--config", str(cfg), "--reps", "2", "--out", str(results),
          "--threads", "1", "--no-timing"])
    a, b = tmp_path / "s1.csv", tmp_path / "s2.csv"
    for out in (a, b):
        assert main(["report", "--in", str(results), "--by", "order", "--out", str(out)]) == 0
    assert a.read_bytes() == b.read_bytes()
    header = a.read_text().splitlines()[0].split(",")
    assert header[:3] == ["order", "method", "count"]
    res = _run("report", "--in", results, "--by", "colour", "--out", a)
    assert res.returncode == 2 and "unknown field" in res.stderr
