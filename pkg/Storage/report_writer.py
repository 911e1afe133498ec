"""
CSV outputs for plotting and bookkeeping: sweep reports, field samples, POD spectra and
the p-convergence table.
"""

import logging
import os
from typing import Iterable, List, Tuple

import numpy as np
import pandas as pd

from models import Discretization, FlowField, PodBasis, SweepResult
from Reduction.services.pod_service import PodService
from utils.field_utils import sample_field, uniform_grid

logger = logging.getLogger(__name__)

REPORT_COLUMNS = [
    "nu", "reynolds", "iterations", "final_rel_change", "asymmetry", "fom_time_s", "rom_time_s", "rel_h1_error"
]


def _prepare(path: str) -> None:
    directory = os.path.dirname(path)
    if directory:
        os.makedirs(directory, exist_ok=True)


def sweep_frame(results: Iterable[SweepResult]) -> pd.DataFrame:
    """One row per parameter, ordered by nu descending"""
    rows = [result.model_dump(include=set(REPORT_COLUMNS)) for result in results]
    frame = pd.DataFrame(rows, columns=REPORT_COLUMNS)
    frame = frame.sort_values("nu", ascending=False, kind="mergesort").reset_index(drop=True)
    frame["iterations"] = frame["iterations"].astype("Int64")
    for column in REPORT_COLUMNS:
        if column != "iterations":
            frame[column] = frame[column].astype(float)
    return frame


def write_sweep_report(path: str, results: Iterable[SweepResult]) -> pd.DataFrame:
    """
    Write the sweep report CSV

    Args:
        path: Output file
        results: Per-parameter records; missing values become empty cells

    Returns:
        The written frame
    """
    frame = sweep_frame(results)
    _prepare(path)
    frame.to_csv(path, index=False, na_rep="")
    logger.info(f"Wrote sweep report with {len(frame)} rows to {path}")
    return frame


def read_sweep_report(path: str) -> pd.DataFrame:
    return pd.read_csv(path)


def export_field(path: str, disc: Discretization, field: FlowField, grid: Tuple[int, int] = (361, 61)) -> pd.DataFrame:
    """Sample u_x, u_y, p on a uniform grid and write x, y, u_x, u_y, p"""
    x, y = uniform_grid(disc, grid[0], grid[1])
    ux, uy, p = sample_field(disc, field, x, y)
    frame = pd.DataFrame({"x": x, "y": y, "u_x": ux, "u_y": uy, "p": p})
    _prepare(path)
    frame.to_csv(path, index=False)
    logger.info(f"Exported field on a {grid[0]}x{grid[1]} grid to {path}")
    return frame


def write_pod_spectrum(path: str, pod: PodBasis) -> pd.DataFrame:
    frame = PodService.spectrum_table(pod)
    _prepare(path)
    frame.to_csv(path, index=False)
    logger.info(f"Wrote POD spectrum ({pod.n_modes} of {len(pod.singular_values)} retained) to {path}")
    return frame


def write_verification_table(path: str, rows: List[dict]) -> pd.DataFrame:
    frame = pd.DataFrame(rows, columns=["p", "quad_points", "status", "iterations", "h1_error", "rel_h1_error"])
    _prepare(path)
    frame.to_csv(path, index=False)
    logger.info(f"Wrote verification table with {len(frame)} rows to {path}")
    return frame


def convergence_rate(frame: pd.DataFrame) -> float:
    """Least-squares slope of log(h1_error) against p"""
    if len(frame) < 2:
        return float("nan")
    return float(np.polyfit(frame["p"].astype(float), np.log(frame["h1_error"].astype(float)), 1)[0])
