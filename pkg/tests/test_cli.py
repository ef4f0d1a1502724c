import csv
import json
import math

import pytest

from ballopt import cli
from ballopt.errors import ConvergenceFailure
from ballopt.output import dumps, fmt


def run(argv):
    return cli.main(argv)


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


def test_number_format():
    assert fmt(0.1) == "0.10000000000000001"
    assert fmt(3) == "3"
    assert fmt(float("nan")) == "nan"
    assert json.loads(dumps({"a": [1.0, 0.1], "b": None})) == {"a": [1, 0.1], "b": None}


def test_eigen_baseline(tmp_path):
    assert run(["eigen", "--n", "2", "--constant", "0", "--out", str(tmp_path)]) == 0
    doc = json.loads((tmp_path / "eigen.json").read_text())
    assert doc["lambda"] == pytest.approx(5.783185962946785, rel=1e-12)
    rows = read_csv(tmp_path / "phi.csv")
    assert rows[0] == ["r", "phi"] and float(rows[-1][0]) == 1.0
    assert b"\r" not in (tmp_path / "phi.csv").read_bytes()


def test_eigen_both_methods(tmp_path):
    assert run(["eigen", "--method", "both", "--alpha", "0.2", "--out", str(tmp_path)]) == 0
    doc = json.loads((tmp_path / "eigen.json").read_text())
    assert [r["method"] for r in doc["results"]] == ["finite-difference", "shooting"]
    assert abs(doc["difference"]) < 1e-8


def test_config_and_flag_precedence(tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"params": {"n": 3, "alpha": 0.5},
                               "density": {"breakpoints": [0, 1], "values": [0]}}))
    out = tmp_path / "o"
    assert run(["eigen", "--config", str(cfg), "--alpha", "0", "--out", str(out)]) == 0
    doc = json.loads((out / "eigen.json").read_text())
    assert doc["params"]["n"] == 3 and doc["params"]["alpha"] == 0
    assert doc["lambda"] == pytest.approx(math.pi ** 2, rel=1e-12)


def test_validation_errors_exit_one(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text('{"breakpoints": [0, 0.7, 0.5, 1], "values": [1, 0, 1]}')
    assert run(["eigen", "--density", str(bad), "--json-errors", "--out", str(tmp_path)]) == 1
    err = json.loads(capsys.readouterr().err)
    assert err["error"] == "NonMonotoneBreakpoints" and err["exit_code"] == 1
    bad.write_text("{not json")
    assert run(["eigen", "--density", str(bad), "--out", str(tmp_path)]) == 1
    assert run(["sweep", "--alpha-sweep", "0.1:0:3", "--out", str(tmp_path)]) == 1
    assert run(["eigen", "--seed", "-1", "--out", str(tmp_path)]) == 1
    assert run(["optimize", "--init", "annulus", "0.2", "0.5", "--out", str(tmp_path)]) == 1


def test_numerical_error_exit_two(tmp_path, monkeypatch, capsys):
    def boom(*args, **kwargs):
        raise ConvergenceFailure("no convergence")

    monkeypatch.setattr(cli, "principal_eigen", boom)
    assert run(["eigen", "--json-errors", "--out", str(tmp_path)]) == 2
    assert json.loads(capsys.readouterr().err)["error"] == "ConvergenceFailure"


def test_optimize_centered_single_iteration(tmp_path):
    assert run(["optimize", "--init", "centered", "--alpha", "0.02", "--out", str(tmp_path)]) == 0
    rows = read_csv(tmp_path / "trace.csv")
    assert rows[0] == ["iter", "lambda", "hausdorff", "support_intervals_json"]
    assert len(rows) == 3 and rows[-1][2] == "0"


def test_optimize_annulus_returns_to_center(tmp_path):
    assert run(["optimize", "--init", "annulus", "0.2", "--alpha", "0.02", "--out", str(tmp_path)]) == 0
    doc = json.loads((tmp_path / "optimize.json").read_text())
    assert doc["hausdorff_to_centered"] < 0.05
    assert doc["lambda_final"] >= doc["lambda_centered"] - 1e-9


def test_path_endpoints_match_eigen(tmp_path):
    assert run(["path", "--alpha", "0.01", "--seed", "2", "--t-samples", "3", "--out", str(tmp_path)]) == 0
    rows = read_csv(tmp_path / "path.csv")
    assert rows[0] == ["t", "f", "fprime", "fd_check"]
    info = json.loads((tmp_path / "path.json").read_text())
    for row, key in ((rows[1], "m_star"), (rows[-1], "m_tilde")):
        dens = tmp_path / f"{key}.json"
        dens.write_text(json.dumps(info[key]))
        out = tmp_path / key
        assert run(["eigen", "--alpha", "0.01", "--density", str(dens), "--out", str(out)]) == 0
        lam = json.loads((out / "eigen.json").read_text())["lambda"]
        assert float(row[1]) == pytest.approx(lam, abs=1e-9)


def test_stability_without_drift(tmp_path):
    assert run(["stability", "--alpha", "0", "--kmax", "8", "--out", str(tmp_path)]) == 0
    rows = read_csv(tmp_path / "spectrum.csv")
    assert len(rows) == 9 and all(r[2] == "0" for r in rows[1:])
    summary = json.loads((tmp_path / "stability.json").read_text())
    assert summary["margin"] > 0


def test_sweep_parallel_equals_serial(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    base = ["sweep", "--alpha-sweep", "0:0.02:3", "--kmax", "6"]
    assert run(base + ["--out", str(a)]) == 0
    assert run(base + ["--workers", "2", "--out", str(b)]) == 0
    assert (a / "sweep.csv").read_bytes() == (b / "sweep.csv").read_bytes()
    rows = read_csv(a / "sweep.csv")
    assert len(rows) == 1 + 3 * 6
    assert rows[0][:5] == ["n", "R", "alpha", "kappa", "m0"]


def test_eigen_sweep_over_dimensions(tmp_path):
    assert run(["sweep", "--quantity", "eigen", "--dims", "1", "2", "3",
                "--alpha-sweep", "0:0.1:2", "--out", str(tmp_path)]) == 0
    rows = read_csv(tmp_path / "sweep.csv")
    assert [r[0] for r in rows[1:]] == ["1", "1", "2", "2", "3", "3"]


def test_selftest_command(capsys):
    assert run(["specfun-selftest"]) == 0
    assert "FAIL" not in capsys.readouterr().out
