#!/usr/bin/env python3
"""
Tests for sweep and trajectory figures.
"""

import pandas as pd
import pytest

from lipsol import plotting
from lipsol.analysis import GridSpec, records_to_frame, sweep, write_frame
from lipsol.cli import EXIT_OK, EXIT_USAGE, run
from lipsol.errors import UsageError
from lipsol.problem import registry_get
from lipsol.sim import run_scenario, scenario_get


def _sweep_csv(tmp_path, name, lower, upper, step):
    records = sweep(registry_get(name), ["socp", "qp"], GridSpec.from_steps(lower, upper, [step]), progress=False)
    path = tmp_path / f"{name}.csv"
    write_frame(records_to_frame(records), str(path))
    return path


def test_one_parameter_sweep_plot(tmp_path):
    csv = _sweep_csv(tmp_path, "example1", [-1.0], [1.0], 0.05)
    frame = pd.read_csv(csv)
    assert plotting.sweep_methods(frame) == ["socp", "qp"]
    png = tmp_path / "example1.png"
    assert plotting.plot_csv(str(csv), str(png)) == str(png)
    assert png.stat().st_size > 0


def test_two_parameter_sweep_plot(tmp_path):
    csv = _sweep_csv(tmp_path, "example2", [-1.0, -1.0], [1.0, 1.0], 0.25)
    png = tmp_path / "example2.png"
    plotting.plot_csv(str(csv), str(png), methods=["qp"])
    assert png.stat().st_size > 0
    with pytest.raises(UsageError):
        plotting.plot_csv(str(csv), str(tmp_path / "none.png"), methods=["qcqp"])


def test_trajectory_plot(tmp_path):
    csv = tmp_path / "trajectory.csv"
    write_frame(run_scenario(scenario_get("rotating_integrator")).to_frame(), str(csv))
    png = tmp_path / "trajectory.png"
    plotting.plot_csv(str(csv), str(png))
    assert png.stat().st_size > 0


def test_plot_command(tmp_path, capsys):
    csv = _sweep_csv(tmp_path, "example1", [0.0], [1.0], 0.1)
    png = tmp_path / "from_cli.png"
    assert run(["plot", "--input", str(csv), "--output", str(png), "--quiet"]) == EXIT_OK
    assert png.exists()
    assert run(["plot", "--input", str(tmp_path / "missing.csv"), "--output", str(png)]) == EXIT_USAGE
    assert run(["plot", "--input", str(csv)]) == EXIT_USAGE
    capsys.readouterr()
