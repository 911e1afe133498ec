"""
online: reduced solves over an evaluation parameter list.
"""

import argparse
import logging
from typing import List

from Cli.common import DEFAULT_EVALUATION_COUNT, add_common_arguments, channel_problem, exit_status, iteration_config
from models import RomSolution, RunConfig, SweepResult
from Reduction.services.rom_service import RomService
from Storage.artifact_store import load_rom
from Storage.report_writer import write_sweep_report

logger = logging.getLogger(__name__)


def add_parser(subparsers: argparse._SubParsersAction) -> argparse.ArgumentParser:
    parser = subparsers.add_parser("online", help="reduced solves from a saved ROM")
    add_common_arguments(parser)
    return parser


def rom_record(solution: RomSolution) -> SweepResult:
    return SweepResult(
        nu=solution.nu,
        status=solution.status,
        iterations=solution.iterations,
        final_rel_change=solution.history[-1] if solution.history else None,
        rom_time_s=solution.median_iteration_time,
    )


def run(config: RunConfig) -> int:
    problem = channel_problem(config)
    _, _, ops = load_rom(config.rom_path, problem.discretization.fingerprint)

    nu_values = config.nu_values(default_count=DEFAULT_EVALUATION_COUNT)
    solutions = RomService.online_sweep(ops, nu_values, iteration_config(config), config.threads)
    results: List[SweepResult] = [rom_record(s) for s in solutions]
    write_sweep_report(config.report_path, results)
    if results:
        logger.info(f"Online phase: {len(results)} parameters, reduced size {ops.size}")
    return exit_status(results, len(nu_values), config.allow_partial)
