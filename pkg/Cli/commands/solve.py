"""
solve: full-order steady solutions over a viscosity list, with field export.
"""

import argparse
import logging

from Cli.common import EXIT_OK, add_common_arguments, channel_problem, exit_status, field_filename, output_path, run_sweep
from Discretization.services.mesh_service import MeshService
from models import RunConfig, SolveStatus
from Storage.report_writer import export_field, write_sweep_report

logger = logging.getLogger(__name__)


def add_parser(subparsers: argparse._SubParsersAction) -> argparse.ArgumentParser:
    parser = subparsers.add_parser("solve", help="full-order steady solve with continuation")
    add_common_arguments(parser)
    return parser


def run(config: RunConfig) -> int:
    problem = channel_problem(config)
    disc = problem.discretization
    MeshService.global_dof_counts(disc)

    nu_values = config.nu_values(default_count=1)
    if not nu_values:
        write_sweep_report(config.report_path, [])
        return EXIT_OK

    results, _ = run_sweep(config, problem, nu_values)
    for result in results:
        if result.status != SolveStatus.CONVERGED:
            continue
        path = output_path(config, field_filename(result.nu))
        export_field(path, disc, result.solution.field, config.grid)

    write_sweep_report(config.report_path, results)
    return exit_status(results, len(nu_values), config.allow_partial)
