#!/usr/bin/env python3
"""
Golden runs of the command-line interface: outputs, exit codes and determinism.
"""

import json

import numpy as np
import pandas as pd
import pytest

from lipsol import cli
from lipsol.cli import EXIT_FAILURE, EXIT_OK, EXIT_USAGE, run
from lipsol.solvers import SolveResult


def _run(capsys, *argv):
    code = run(list(argv))
    captured = capsys.readouterr()
    return code, captured.out, captured.err


def test_solve_example2_socp(capsys):
    code, out, _ = _run(capsys, "solve", "--problem", "example2", "--x", "0,0", "--method", "socp")
    assert code == EXIT_OK
    result = json.loads(out)
    assert result["u"] == [1.0, 0.0]
    assert result["radius"] == 1.0
    assert result["status"] == "ok"
    assert result["pi_f"] == [2.0, 0.0]


def test_solve_example1_qp_at_the_switch(capsys):
    code, out, err = _run(capsys, "solve", "--problem", "example1", "--x", "0", "--method", "qp")
    assert code == EXIT_OK
    result = json.loads(out)
    assert result["u"] == pytest.approx([1.0, 0.0], abs=1e-12)
    assert result["active_set"] == [1, 2]
    assert result["method"] == "qp"
    assert "active set {1, 2}" in err


def test_solve_several_methods_and_negative_parameters(capsys):
    code, out, _ = _run(capsys, "solve", "--problem", "example1", "--x=-0.5", "--method", "socp,qcqp,qp")
    assert code == EXIT_OK
    results = json.loads(out)
    assert [r["method"] for r in results] == ["socp", "qcqp", "qp"]
    assert all(r["feasibility_residual"] <= 1e-9 for r in results)


def test_lipschitz_robinson(capsys):
    code, out, _ = _run(capsys, "lipschitz", "--problem", "robinson", "--provider", "analytic_center",
                        "--steps", "1e-2,1e-3", "--method", "socp,qp", "--half-width", "0.02", "--quiet")
    assert code == EXIT_OK
    payload = json.loads(out)
    assert payload["verdicts"] == {"socp": "lipschitz_stable", "qp": "diverging"}
    assert payload["window"] == {"lower": [-0.02, -0.02], "upper": [0.02, 0.02]}
    assert payload["reports"]["qp"]["steps"] == pytest.approx([1e-2, 1e-3])


@pytest.mark.slow
def test_lipschitz_robinson_default_window(capsys):
    code, out, _ = _run(capsys, "lipschitz", "--problem", "robinson", "--provider", "analytic_center",
                        "--steps", "1e-2,1e-3", "--method", "socp,qp", "--quiet")
    assert code == EXIT_OK
    payload = json.loads(out)
    assert payload["verdicts"] == {"socp": "lipschitz_stable", "qp": "diverging"}
    assert payload["window"] == {"lower": [-0.05, -0.05], "upper": [0.05, 0.05]}
    assert payload["failed_points"] == {"socp": 0, "qp": 0}


def test_lipschitz_without_usable_pairs_fails(capsys):
    code, out, err = _run(capsys, "lipschitz", "--problem", "example2", "--provider", "analytic_center",
                          "--steps", "0.05,0.025", "--method", "socp", "--quiet")
    assert code == EXIT_FAILURE
    payload = json.loads(out)
    assert payload["verdicts"] == {"socp": "insufficient_data"}
    assert payload["failed_points"] == {"socp": 9 + 25}
    assert payload["reports"]["socp"]["complete"] is False
    assert "no usable pairs" in err


def test_sweep_csv_is_identical_across_runs_and_workers(capsys):
    argv = ["sweep", "--problem", "example2", "--methods", "socp,qp", "--step", "0.5", "--quiet"]
    code, first, _ = _run(capsys, *argv)
    assert code == EXIT_OK
    _, second, _ = _run(capsys, *argv)
    _, threaded, _ = _run(capsys, *argv, "--workers", "3")
    assert first == second == threaded
    header = first.splitlines()[0].split(",")
    assert header[:3] == ["x_1", "x_2", "socp_u_1"]
    assert len(first.splitlines()) == 1 + 81


def test_seed_from_environment(capsys, monkeypatch):
    argv = ["solve", "--problem", "robinson", "--x", "0.1,0.1", "--provider", "steiner", "--samples", "64"]
    monkeypatch.setenv("LIPSOL_SEED", "3")
    code, from_env, _ = _run(capsys, *argv)
    assert code == EXIT_OK
    monkeypatch.delenv("LIPSOL_SEED")
    _, explicit, _ = _run(capsys, *argv, "--seed", "3")
    _, default, _ = _run(capsys, *argv)
    assert from_env == explicit
    assert json.loads(default)["pi_f"] != json.loads(explicit)["pi_f"]

    monkeypatch.setenv("LIPSOL_SEED", "three")
    code, _, _ = _run(capsys, *argv)
    assert code == EXIT_USAGE


def test_compare_and_bound(capsys):
    code, out, _ = _run(capsys, "compare", "--problem", "example2", "--step", "1", "--format", "json", "--quiet")
    assert code == EXIT_OK
    rows = json.loads(out)
    assert [row["method"] for row in rows] == ["socp", "qcqp"]
    assert all(row["min_gap"] >= -1e-7 for row in rows)

    code, out, _ = _run(capsys, "bound", "--problem", "example2")
    assert code == EXIT_OK
    assert json.loads(out)["L"] == pytest.approx(8.43)


def test_list(capsys):
    code, out, _ = _run(capsys, "list")
    assert code == EXIT_OK
    payload = json.loads(out)
    assert [p["name"] for p in payload["problems"]] == ["example1", "example2", "robinson"]
    assert "saturated_integrator" in payload["scenarios"]


def test_simulate_writes_trajectory(capsys, tmp_path):
    path = tmp_path / "trajectory.csv"
    code, out, _ = _run(capsys, "simulate", "--scenario", "example1_drive", "--controller", "socp",
                        "--T", "0.05", "--output", str(path), "--quiet")
    assert code == EXIT_OK
    assert out == ""
    frame = pd.read_csv(path)
    assert list(frame.columns) == ["t", "x_1", "u_1", "u_2", "status"]
    assert len(frame) == 51

    code, out, _ = _run(capsys, "simulate", "--problem", "example1", "--dynamics=-u2", "--x0", "0.3",
                        "--dt", "0.01", "--T", "0.1", "--quiet")
    assert code == EXIT_OK
    assert len(out.splitlines()) == 1 + 11


def test_usage_errors(capsys):
    assert _run(capsys, "solve", "--problem", "example2")[0] == EXIT_USAGE
    assert _run(capsys, "frobnicate")[0] == EXIT_USAGE
    assert _run(capsys, "solve", "--problem", "example2", "--x", "a,b")[0] == EXIT_USAGE
    assert _run(capsys, "solve", "--problem", "robinson", "--x", "0,0", "--provider", "steiner")[0] == EXIT_USAGE
    assert _run(capsys, "compare", "--problem", "example2", "--methods", "socp,qcqp")[0] == EXIT_USAGE
    assert _run(capsys, "sweep", "--problem", "example2", "--methods", "lp")[0] == EXIT_USAGE
    assert _run(capsys, "simulate", "--problem", "example1")[0] == EXIT_USAGE
    assert _run(capsys, "--version")[0] == EXIT_OK


def test_solver_and_assumption_errors(capsys, tmp_path):
    code, _, err = _run(capsys, "solve", "--problem", "example2", "--x", "3,0")
    assert code == EXIT_FAILURE
    assert "outside" in err

    code, _, _ = _run(capsys, "solve", "--problem", "example5", "--x", "0")
    assert code == EXIT_FAILURE

    doc = {
        "name": "bad_pi_f",
        "n": 1,
        "m": 1,
        "p": 2,
        "domain": {"lower": [0.0], "upper": [1.0]},
        "A": [["1"], ["-1"]],
        "b": ["1", "1"],
        "pi_des": ["0"],
        "pi_f": ["2 + x1"],
    }
    path = tmp_path / "bad_pi_f.json"
    path.write_text(json.dumps(doc), encoding="utf-8")
    code, _, err = _run(capsys, "solve", "--problem", str(path), "--x", "0.5")
    assert code == EXIT_FAILURE
    assert "constraint 1" in err

    code, _, err = _run(capsys, "solve", "--problem", "example2", "--x", "0,0", "--provider", "analytic_center")
    assert code == EXIT_FAILURE
    assert "unbounded" in err


def test_solve_fails_when_a_method_does_not_finish(capsys, monkeypatch):
    def infeasible(instance, method, settings=None):
        return SolveResult(u=np.full(instance.m, np.nan), method="qp_oracle",
                           feasibility_residual=float("inf"), status="infeasible")

    monkeypatch.setattr(cli, "solve", infeasible)
    code, out, err = _run(capsys, "solve", "--problem", "example2", "--x", "0,0", "--method", "qp")
    assert code == EXIT_FAILURE
    assert json.loads(out)["status"] == "infeasible"
    assert "status infeasible" in err
