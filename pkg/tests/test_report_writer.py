"""
Tests for CSV reports and field export
"""

import os
import sys

import numpy as np
import pandas as pd
import pytest

sys.path.insert(0, os.path.abspath(os.path.join(os.path.dirname(__file__), "..")))

from models import FlowField, SolveStatus, SweepResult
from Storage.report_writer import (
    REPORT_COLUMNS, convergence_rate, export_field, read_sweep_report, sweep_frame, write_sweep_report,
    write_verification_table
)
from helpers import linear_field


def test_sweep_report_sorted_by_viscosity(tmp_path):
    """Rows are ordered by nu descending with Re = 1 / (4 nu)"""
    results = [
        SweepResult(nu=0.0025, iterations=30, final_rel_change=5e-9, asymmetry=0.4, fom_time_s=1.2),
        SweepResult(nu=0.0075, iterations=12, final_rel_change=2e-9, asymmetry=1e-6, fom_time_s=1.1),
        SweepResult(nu=0.005, status=SolveStatus.NOT_CONVERGED, iterations=100),
    ]
    path = str(tmp_path / "out" / "report.csv")
    write_sweep_report(path, results)
    frame = read_sweep_report(path)
    assert list(frame.columns) == REPORT_COLUMNS
    assert frame["nu"].tolist() == [0.0075, 0.005, 0.0025]
    assert np.allclose(frame["reynolds"], [100.0 / 3.0, 50.0, 100.0])
    assert frame["iterations"].tolist() == [12, 100, 30]
    assert np.isnan(frame["asymmetry"].iloc[1])
    assert frame["rom_time_s"].isna().all()


def test_empty_report_has_header_only(tmp_path):
    """An empty parameter list still writes the header"""
    path = tmp_path / "empty.csv"
    write_sweep_report(str(path), [])
    assert path.read_text().strip() == ",".join(REPORT_COLUMNS)


def test_sweep_frame_excludes_solution():
    """Attached solutions never leak into the report"""
    frame = sweep_frame([SweepResult(nu=0.01, solution=object())])
    assert "solution" not in frame.columns
    assert len(frame) == 1


def test_field_export_grid(tmp_path, channel):
    """361 x 61 samples with x, y, u_x, u_y, p columns"""
    path = str(tmp_path / "field.csv")
    field = linear_field(channel)
    frame = export_field(path, channel.discretization, field, (361, 61))
    assert len(frame) == 22021
    written = pd.read_csv(path)
    assert list(written.columns) == ["x", "y", "u_x", "u_y", "p"]
    assert np.allclose(written["u_x"], written["x"])
    assert np.allclose(written["u_y"], -written["y"])
    assert np.allclose(written["p"], 0.0)


def test_zero_field_export(tmp_path, channel):
    """Zero coefficients sample to zero everywhere"""
    frame = export_field(str(tmp_path / "zero.csv"), channel.discretization, FlowField.zeros(channel.discretization), (5, 3))
    assert len(frame) == 15
    assert np.allclose(frame[["u_x", "u_y", "p"]].to_numpy(), 0.0)


def test_verification_table_and_rate(tmp_path):
    """Log-error slope of an exact exponential is recovered"""
    rows = [
        {"p": p, "quad_points": p + 2, "status": "converged", "iterations": 10,
         "h1_error": float(np.exp(-1.5 * p)), "rel_h1_error": 0.0}
        for p in (4, 6, 8)
    ]
    frame = write_verification_table(str(tmp_path / "verify.csv"), rows)
    assert np.isclose(convergence_rate(frame), -1.5)
    assert np.isnan(convergence_rate(frame.iloc[:1]))


if __name__ == "__main__":
    pytest.main([__file__])
