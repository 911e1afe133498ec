"""
Shared CLI plumbing: flags, RunConfig construction, problem setup and exit-code policy.
"""

import argparse
import logging
import os
from typing import List, Optional, Sequence, Tuple

from models import (
    BasisSpec, FlowProblem, IterationConfig, PodCriterion, RunConfig, SnapshotSet, SolveStatus,
    Subcommand, SweepResult
)
from settings import EXPORT_GRID, OUTPUT_DIR, REPORT_PATH, ROM_PATH, SNAPSHOTS_PATH, THREADS
from Solver.services.oseen_service import OseenService
from Solver.services.problem_service import ProblemService

logger = logging.getLogger(__name__)

# One-sided inflow tilt used to pick a wall-hugging branch
PERTURBATION_AMPLITUDE = 1e-3

DEFAULT_TRAINING_COUNT = 11
DEFAULT_EVALUATION_COUNT = 21

EXIT_OK = 0
EXIT_NOT_CONVERGED = 3


def add_common_arguments(parser: argparse.ArgumentParser) -> None:
    mesh = parser.add_argument_group("mesh and basis")
    mesh.add_argument("--nx", type=int, default=8, help="elements in x")
    mesh.add_argument("--ny", type=int, default=4, help="elements in y")
    mesh.add_argument("--lx", type=float, default=36.0, help="channel length")
    mesh.add_argument("--ly", type=float, default=6.0, help="channel height")
    mesh.add_argument("--order", type=int, default=12, help="velocity polynomial order p")
    mesh.add_argument("--quad", type=int, default=None, help="quadrature points per direction (default p + 2)")
    mesh.add_argument("--inflow-span", type=float, nargs=2, default=(2.5, 3.5), metavar=("Y0", "Y1"))
    mesh.add_argument("--strict-inflow", action="store_true", help="reject inflow spans that cut element edges")

    params = parser.add_argument_group("parameters")
    params.add_argument("--nu", type=float, nargs="*", default=None, help="explicit viscosities")
    params.add_argument("--nu-range", type=float, nargs=2, default=None, metavar=("HIGH", "LOW"))
    params.add_argument("--nu-count", type=int, default=None, help="points in --nu-range")

    solver = parser.add_argument_group("solver")
    solver.add_argument("--tol", type=float, default=1e-8, help="relative H1 change tolerance")
    solver.add_argument("--max-iter", type=int, default=100)
    solver.add_argument("--relax", type=float, default=1.0, help="under-relaxation factor in (0, 1]")
    solver.add_argument("--continuation-step", type=float, default=None, help="largest nu move per continuation step")
    solver.add_argument("--acceleration-depth", type=int, default=5, help="iterates mixed per Oseen step (0 = plain fixed point)")
    solver.add_argument("--max-step-halvings", type=int, default=6, help="bisections of a failed continuation move")
    solver.add_argument("--perturb", action="store_true", help="select a branch with a perturbed inflow first")
    solver.add_argument("--cold-start", action="store_true", help="solve every parameter from zero, in parallel")
    solver.add_argument("--allow-partial", action="store_true", help="exit 0 even if some parameters did not converge")

    rom = parser.add_argument_group("reduced model")
    rom.add_argument("--energy", type=float, default=0.999, help="POD retained energy fraction")
    rom.add_argument("--pod-criterion", choices=[c.value for c in PodCriterion], default=PodCriterion.ENERGY.value)

    io = parser.add_argument_group("files")
    io.add_argument("--snapshots", default=SNAPSHOTS_PATH, help="snapshot artifact path")
    io.add_argument("--rom", default=ROM_PATH, help="ROM artifact path")
    io.add_argument("--report", default=REPORT_PATH, help="CSV report path")
    io.add_argument("--output-dir", default=OUTPUT_DIR)
    io.add_argument("--grid", default=EXPORT_GRID, help="field export grid NXxNY")
    io.add_argument("--threads", type=int, default=THREADS)


def config_from_args(args: argparse.Namespace) -> RunConfig:
    """Validate parsed flags into a RunConfig (raises pydantic ValidationError)"""
    values = {
        "subcommand": Subcommand(args.subcommand),
        "nx": args.nx,
        "ny": args.ny,
        "lx": args.lx,
        "ly": args.ly,
        "order": args.order,
        "quad": args.quad,
        "nu": args.nu,
        "nu_range": tuple(args.nu_range) if args.nu_range else None,
        "nu_count": args.nu_count,
        "tol": args.tol,
        "max_iter": args.max_iter,
        "relax": args.relax,
        "continuation_step": args.continuation_step,
        "acceleration_depth": args.acceleration_depth,
        "max_step_halvings": args.max_step_halvings,
        "perturb": args.perturb,
        "cold_start": args.cold_start,
        "energy": args.energy,
        "pod_criterion": args.pod_criterion,
        "snapshots_path": args.snapshots,
        "rom_path": args.rom,
        "report_path": args.report,
        "output_dir": args.output_dir,
        "threads": args.threads,
        "allow_partial": args.allow_partial,
        "inflow_span": tuple(args.inflow_span),
        "strict_inflow": args.strict_inflow,
        "grid": args.grid,
    }
    if getattr(args, "p_list", None):
        values["p_list"] = args.p_list
    if getattr(args, "re", None) is not None:
        values["kovasznay_re"] = args.re
    return RunConfig(**values)


def basis_spec(config: RunConfig) -> BasisSpec:
    return BasisSpec(order_velocity=config.order, quad_points=config.quad)


def iteration_config(config: RunConfig) -> IterationConfig:
    return IterationConfig(
        tol=config.tol,
        max_iter=config.max_iter,
        continuation_step=config.continuation_step,
        under_relaxation=config.relax,
        acceleration_depth=config.acceleration_depth,
        max_step_halvings=config.max_step_halvings,
    )


def channel_problem(config: RunConfig) -> FlowProblem:
    return ProblemService.build_channel_problem(
        nx=config.nx,
        ny=config.ny,
        lx=config.lx,
        ly=config.ly,
        spec=basis_spec(config),
        inflow_span=config.inflow_span,
        strict_inflow=config.strict_inflow,
    )


def run_sweep(
    config: RunConfig,
    problem: FlowProblem,
    nu_values: Sequence[float],
) -> Tuple[List[SweepResult], SnapshotSet]:
    """Continuation (default) or parallel cold-start sweep as configured"""
    cfg = iteration_config(config)
    if config.cold_start:
        return OseenService.cold_start_sweep(problem, nu_values, cfg, config.threads)
    perturbed = None
    if config.perturb:
        perturbed = ProblemService.channel_problem(problem.discretization, config.inflow_span, PERTURBATION_AMPLITUDE)
    return OseenService.continuation_sweep(problem, nu_values, cfg, perturbed, config.threads)


def exit_status(results: Sequence[SweepResult], expected: int, allow_partial: bool) -> int:
    """3 when a parameter failed or was never reached, unless partial results are allowed"""
    failed = [r.nu for r in results if r.status != SolveStatus.CONVERGED]
    missing = expected - len(results)
    if not failed and missing <= 0:
        return EXIT_OK
    message = f"{len(failed)} parameter(s) did not converge {failed}, {max(missing, 0)} not reached"
    if allow_partial:
        logger.warning(f"{message}; continuing because partial results are allowed")
        return EXIT_OK
    logger.error(message)
    return EXIT_NOT_CONVERGED


def output_path(config: RunConfig, name: str) -> str:
    return os.path.join(config.output_dir, name)


def field_filename(nu: float, label: Optional[str] = None) -> str:
    prefix = f"{label}_" if label else ""
    return f"{prefix}field_nu{nu:.6g}.csv"
