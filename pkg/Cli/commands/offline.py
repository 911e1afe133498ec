"""
offline: training sweep, snapshot and POD construction, reduced operator precomputation.
"""

import argparse
import logging

from Cli.common import (
    DEFAULT_TRAINING_COUNT, EXIT_NOT_CONVERGED, add_common_arguments, channel_problem, exit_status,
    output_path, run_sweep
)
from errors import NonConvergenceError
from models import RunConfig
from Reduction.services.pod_service import PodService
from Reduction.services.rom_service import RomService
from Storage.artifact_store import save_rom, save_snapshots
from Storage.report_writer import write_pod_spectrum, write_sweep_report

logger = logging.getLogger(__name__)


def add_parser(subparsers: argparse._SubParsersAction) -> argparse.ArgumentParser:
    parser = subparsers.add_parser("offline", help="training sweep, POD and reduced operators")
    add_common_arguments(parser)
    return parser


def run(config: RunConfig) -> int:
    problem = channel_problem(config)
    disc = problem.discretization
    nu_values = config.nu_values(default_count=DEFAULT_TRAINING_COUNT)
    if not nu_values:
        raise NonConvergenceError("No training parameters given")

    results, snapshots = run_sweep(config, problem, nu_values)
    write_sweep_report(config.report_path, results)
    status = exit_status(results, len(nu_values), config.allow_partial)
    if status == EXIT_NOT_CONVERGED:
        return status
    if snapshots.count == 0:
        raise NonConvergenceError("No training parameter converged; nothing to reduce")

    save_snapshots(config.snapshots_path, snapshots)

    state_pod = PodService.pod(snapshots, config.energy, config.pod_criterion)
    interior_pod = PodService.pod_matrix(snapshots.interior, config.energy, config.pod_criterion)
    write_pod_spectrum(output_path(config, "pod_spectrum.csv"), state_pod)
    write_pod_spectrum(output_path(config, "interior_pod_spectrum.csv"), interior_pod)
    logger.info(
        f"Reduced dimension {state_pod.n_modes} + {interior_pod.n_modes} from {snapshots.count} snapshots, "
        f"truncation tail {state_pod.truncation_tail:.3e}"
    )

    projection = RomService.build_projection(state_pod, interior_pod, problem, disc.fingerprint)
    ops = RomService.offline_build(problem, projection, config.threads)
    save_rom(config.rom_path, state_pod, interior_pod, ops)
    return status
