"""
compare: full-order and reduced solves on the same parameters, H1 error and speedup.
"""

import argparse
import logging
from typing import Dict, List

import numpy as np

from Cli.common import (
    DEFAULT_EVALUATION_COUNT, EXIT_OK, add_common_arguments, channel_problem, exit_status, iteration_config, run_sweep
)
from models import RomSolution, RunConfig, SolveStatus, SweepResult
from Reduction.services.rom_service import RomService
from Storage.artifact_store import load_rom
from Storage.report_writer import write_sweep_report

logger = logging.getLogger(__name__)


def add_parser(subparsers: argparse._SubParsersAction) -> argparse.ArgumentParser:
    parser = subparsers.add_parser("compare", help="full-order vs reduced accuracy and timing")
    add_common_arguments(parser)
    return parser


def timing_summary(fom: List[SweepResult], rom: List[RomSolution]) -> Dict[str, float]:
    """Median per-iteration wall time of each model and their ratio"""
    fom_times = [t for r in fom if r.solution is not None for t in r.solution.iteration_times]
    rom_times = [t for s in rom for t in s.iteration_times]
    fom_median = float(np.median(fom_times)) if fom_times else float("nan")
    rom_median = float(np.median(rom_times)) if rom_times else float("nan")
    speedup = fom_median / rom_median if rom_times and rom_median > 0 else float("nan")
    return {"fom_iteration_s": fom_median, "rom_iteration_s": rom_median, "speedup": speedup}


def run(config: RunConfig) -> int:
    problem = channel_problem(config)
    state_pod, interior_pod, ops = load_rom(config.rom_path, problem.discretization.fingerprint)
    projection = RomService.build_projection(state_pod, interior_pod, problem, ops.fingerprint)

    nu_values = config.nu_values(default_count=DEFAULT_EVALUATION_COUNT)
    if not nu_values:
        write_sweep_report(config.report_path, [])
        return EXIT_OK
    cfg = iteration_config(config)
    rom_solutions = RomService.online_sweep(ops, nu_values, cfg, config.threads)
    fom_results, _ = run_sweep(config, problem, nu_values)

    by_nu = {s.nu: s for s in rom_solutions}
    rows: List[SweepResult] = []
    for result in fom_results:
        rom = by_nu[result.nu]
        update = {"rom_time_s": rom.median_iteration_time}
        if result.status == SolveStatus.CONVERGED and rom.converged:
            rom_field = RomService.recover_full(problem, projection, rom.coordinates, rom.nu)
            update["rel_h1_error"] = RomService.relative_h1_error(problem, result.solution.field, rom_field)
            best = RomService.projection_error(problem, projection, result.solution.field)
            logger.info(f"nu={result.nu:.6g}: relative H1 error {update['rel_h1_error']:.3e} (projection error {best:.3e})")
        else:
            update["status"] = SolveStatus.NOT_CONVERGED
        rows.append(result.model_copy(update=update))

    write_sweep_report(config.report_path, rows)

    summary = timing_summary(fom_results, rom_solutions)
    errors = [r.rel_h1_error for r in rows if r.rel_h1_error is not None]
    print(
        f"median FOM iteration {summary['fom_iteration_s']:.4f}s, median ROM iteration "
        f"{summary['rom_iteration_s'] * 1e3:.4f}ms, speedup {summary['speedup']:.1f}x"
    )
    if errors:
        print(f"relative H1 error: max {max(errors):.3e}, mean {np.mean(errors):.3e}")
    logger.info(f"POD truncation tail {state_pod.truncation_tail:.3e}")
    return exit_status(rows, len(nu_values), config.allow_partial)
