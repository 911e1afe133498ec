"""
verify: p-convergence of the full-order solver against the Kovasznay solution.
"""

import argparse
import logging
from typing import List

from Cli.common import EXIT_NOT_CONVERGED, EXIT_OK, add_common_arguments, iteration_config
from models import BasisSpec, RunConfig, SolveStatus
from Solver.services.oseen_service import OseenService
from Solver.services.problem_service import ProblemService
from Storage.report_writer import convergence_rate, write_verification_table

logger = logging.getLogger(__name__)

# Lowest order that resolves the Kovasznay wave on the 2x2 mesh
MIN_RESOLVED_ORDER = 3


def add_parser(subparsers: argparse._SubParsersAction) -> argparse.ArgumentParser:
    parser = subparsers.add_parser("verify", help="Kovasznay p-convergence study")
    add_common_arguments(parser)
    parser.add_argument("--p-list", type=int, nargs="+", default=None, help="velocity orders to test")
    parser.add_argument("--re", type=float, default=None, help="Kovasznay Reynolds number (default 40)")
    return parser


def run(config: RunConfig) -> int:
    cfg = iteration_config(config)
    rows: List[dict] = []
    for p in config.p_list:
        if p < MIN_RESOLVED_ORDER:
            logger.warning(f"p={p} under-resolves the Kovasznay flow; the fixed point may oscillate without converging")
        spec = BasisSpec(order_velocity=p, over_integration=True)
        problem, flow = ProblemService.build_kovasznay_problem(spec, config.kovasznay_re)
        solution = OseenService.solve_steady(problem, flow.nu, None, cfg, config.threads)
        error, relative = ProblemService.exact_h1_error(problem.discretization, solution.field, flow)
        logger.info(f"Kovasznay p={p} q={spec.quad_points}: H1 error {error:.3e} (relative {relative:.3e})")
        rows.append({
            "p": p,
            "quad_points": spec.quad_points,
            "status": solution.status.value,
            "iterations": solution.iterations,
            "h1_error": error,
            "rel_h1_error": relative,
        })

    frame = write_verification_table(config.report_path, rows)
    print(frame.to_string(index=False))

    errors = frame["h1_error"].tolist()
    if any(b >= a for a, b in zip(errors, errors[1:])):
        logger.warning("H1 error does not decrease monotonically with p")
    if len(frame) > 1:
        logger.info(f"Observed log-error slope per unit p: {convergence_rate(frame):.3f}")

    if any(row["status"] != SolveStatus.CONVERGED.value for row in rows) and not config.allow_partial:
        logger.error("At least one verification solve did not converge")
        return EXIT_NOT_CONVERGED
    return EXIT_OK
