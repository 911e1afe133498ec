"""
Oseen Service
Fixed-point (Oseen) iteration to steady state, viscosity continuation and snapshot capture.
"""

import logging
import time
from typing import List, Optional, Sequence, Tuple

import numpy as np

from errors import InvalidArgumentError
from models import (
    Discretization, DofMaps, FlowField, FlowProblem, IterationConfig, SnapshotSet, SolveStatus, SteadySolution,
    SweepResult
)
from settings import THREADS
from Solver.services.assembly_service import AssemblyService
from Solver.services.condensation_service import CondensationService
from utils.acceleration import AndersonMixer
from utils.field_utils import check_field, velocity_at_quadrature
from utils.parallel import parallel_map

logger = logging.getLogger(__name__)

# Unperturbed asymmetry above which the wall-hugging branch counts as selected
BRANCH_ASYMMETRY = 1e-3


class OseenService:

    @staticmethod
    def oseen_step(
        problem: FlowProblem,
        u_k: FlowField,
        nu: float,
        relax: float = 1.0,
        threads: int = THREADS,
    ) -> FlowField:
        """
        One assemble -> condense -> solve -> back-substitute pass

        Args:
            problem: Discretization plus boundary data
            u_k: Current iterate, used as the advecting field
            nu: Viscosity
            relax: Under-relaxation factor in (0, 1]

        Returns:
            relax * u_new + (1 - relax) * u_k
        """
        disc = problem.discretization
        check_field(disc, u_k)
        local = AssemblyService.assemble_oseen(disc, nu, u_k, forcing=problem.forcing, threads=threads)
        local = AssemblyService.apply_dirichlet(local, disc.maps, problem.dirichlet_values)
        new = CondensationService.solve(local, disc.maps, threads)
        if relax != 1.0:
            new = FlowField(
                velocity=relax * new.velocity + (1.0 - relax) * u_k.velocity,
                pressure=relax * new.pressure + (1.0 - relax) * u_k.pressure,
                nu=nu,
            )
        return new

    @staticmethod
    def _pack(field: FlowField) -> np.ndarray:
        return np.concatenate([field.velocity.ravel(), field.pressure.ravel()])

    @staticmethod
    def _unpack(disc: Discretization, vector: np.ndarray, nu: float) -> FlowField:
        n_v = disc.n_elements * 2 * disc.n_modes
        return FlowField(
            velocity=vector[:n_v].reshape(disc.n_elements, 2, disc.n_modes),
            pressure=vector[n_v:].reshape(disc.n_elements, disc.n_pressure),
            nu=nu,
        )

    @staticmethod
    def solve_steady(
        problem: FlowProblem,
        nu: float,
        initial: Optional[FlowField] = None,
        cfg: Optional[IterationConfig] = None,
        threads: int = THREADS,
    ) -> SteadySolution:
        """
        Iterate Oseen steps until the relative H1 change drops below cfg.tol

        The change is measured between an iterate and its Oseen image. Iterates are combined
        by Anderson mixing (cfg.acceleration_depth, damped by cfg.under_relaxation); depth 0
        is the plain relaxed fixed point. Non-convergence is reported through the status,
        never raised.
        """
        if nu <= 0:
            raise InvalidArgumentError(f"Viscosity must be positive, got {nu}")
        cfg = cfg or IterationConfig()
        disc = problem.discretization
        current = initial if initial is not None else FlowField.zeros(disc, nu)
        # mixing coefficients fitted on velocity only
        weights = np.concatenate([np.ones(current.velocity.size), np.zeros(current.pressure.size)])
        mixer = AndersonMixer(cfg.acceleration_depth, cfg.under_relaxation, weights)

        history: List[float] = []
        times: List[float] = []
        status = SolveStatus.NOT_CONVERGED
        solved = current
        for k in range(1, cfg.max_iter + 1):
            start = time.perf_counter()
            solved = OseenService.oseen_step(problem, current, nu, 1.0, threads)
            change = AssemblyService.h1_relative_change(disc, solved, current)
            history.append(change)
            done = change < cfg.tol
            if not done:
                mixed = mixer.update(OseenService._pack(current), OseenService._pack(solved))
                current = OseenService._unpack(disc, mixed, nu)
            times.append(time.perf_counter() - start)
            logger.info(f"nu={nu:.6g} iteration {k}: relative H1 change {change:.3e} ({times[-1]:.3f}s)")
            if done:
                status = SolveStatus.CONVERGED
                break

        if len(history) > 2 and any(b > a for a, b in zip(history[1:], history[2:])):
            logger.warning(f"nu={nu:.6g}: convergence history is not monotone after the first step")
        if status != SolveStatus.CONVERGED:
            logger.warning(f"nu={nu:.6g}: not converged after {cfg.max_iter} iterations (last change {history[-1]:.3e})")

        field = solved.model_copy(update={"nu": nu, "iterations": len(history)})
        return SteadySolution(
            field=field,
            nu=nu,
            status=status,
            iterations=len(history),
            history=history,
            iteration_times=times,
        )

    @staticmethod
    def asymmetry_indicator(problem: FlowProblem, field: FlowField) -> float:
        """
        ||u_x(x, y) - u_x(x, Ly - y)|| / ||u_x|| in L2, on the mirrored quadrature grid

        Element row j mirrors onto row ny-1-j; GLL nodes are symmetric so node b maps to q-1-b.
        """
        disc = problem.discretization
        check_field(disc, field)
        mesh = disc.mesh
        q = disc.rule.n_points
        values, _, _ = velocity_at_quadrature(disc, field.velocity)
        ux = values[:, 0].reshape(mesh.ny, mesh.nx, q, q)
        mirrored = ux[::-1, :, :, ::-1]
        weights = disc.velocity_table.weights.reshape(q, q)[None, None] * mesh.jacobian.reshape(mesh.ny, mesh.nx)[:, :, None, None]

        norm = np.sqrt(np.sum(weights * ux ** 2))
        if norm == 0.0:
            return 0.0
        return float(np.sqrt(np.sum(weights * (ux - mirrored) ** 2)) / norm)

    @staticmethod
    def steady_residual(problem: FlowProblem, field: FlowField, nu: float) -> float:
        """Relative algebraic residual of the Oseen system linearized at the field itself"""
        disc = problem.discretization
        maps = disc.maps
        nb = disc.n_boundary_modes
        local = AssemblyService.assemble_oseen(disc, nu, field, forcing=problem.forcing)
        local = AssemblyService.apply_dirichlet(local, maps, problem.dirichlet_values)

        state = AssemblyService.element_state(field, nb)
        nvb = local.a.shape[1]
        state[:, :nvb] -= local.lift_bnd
        operator = AssemblyService.element_operator(local)
        rhs = AssemblyService.element_rhs(local)
        residual = np.einsum("eij,ej->ei", operator, state) - rhs

        n_p = local.d_bnd.shape[1]

        def gathered(r: np.ndarray) -> np.ndarray:
            out = np.zeros(maps.n_global_boundary)
            np.add.at(out, maps.gather_index.ravel(), (maps.gather_sign * r[:, :nvb]).ravel())
            return np.concatenate([out[~maps.dirichlet_mask], r[:, nvb + n_p:].ravel(), OseenService._pressure_rows(maps, r[:, nvb:nvb + n_p])])

        numerator = np.linalg.norm(gathered(residual))
        denominator = np.linalg.norm(gathered(rhs))
        if denominator == 0.0:
            return float(numerator)
        return float(numerator / denominator)

    @staticmethod
    def _pressure_rows(maps: DofMaps, rows: np.ndarray) -> np.ndarray:
        rows = rows.copy()
        if maps.pressure_pin is not None:
            rows[maps.pressure_pin, 0] = 0.0
        return rows.ravel()

    @staticmethod
    def divergence_residual(problem: FlowProblem, field: FlowField) -> float:
        """max over elements and pressure modes of |int q div u|"""
        disc = problem.discretization
        nb = disc.n_boundary_modes
        local = AssemblyService.assemble_oseen(disc, 1.0, None, viscous=False, convective=False)
        v_bnd, v_int = AssemblyService.split_velocity(field, nb)
        divergence = np.einsum("eij,ej->ei", local.d_bnd, v_bnd) + np.einsum("eij,ej->ei", local.d_int, v_int)
        return float(np.abs(OseenService._pressure_rows(disc.maps, divergence)).max())

    @staticmethod
    def _record(problem: FlowProblem, solution: SteadySolution) -> SweepResult:
        return SweepResult(
            nu=solution.nu,
            status=solution.status,
            iterations=solution.iterations,
            final_rel_change=solution.final_rel_change,
            asymmetry=OseenService.asymmetry_indicator(problem, solution.field),
            fom_time_s=solution.median_iteration_time,
            solution=solution,
        )

    @staticmethod
    def _snapshots(problem: FlowProblem, results: Sequence[SweepResult]) -> SnapshotSet:
        converged = [r for r in results if r.status == SolveStatus.CONVERGED]
        disc = problem.discretization
        n_state = disc.maps.n_global_boundary + disc.n_elements * disc.n_pressure
        n_int = disc.n_elements * 2 * disc.n_interior_modes
        states = np.zeros((n_state, len(converged)))
        interior = np.zeros((n_int, len(converged)))
        for col, result in enumerate(converged):
            states[:, col], interior[:, col] = CondensationService.hat_state(problem, result.solution.field)
        return SnapshotSet(
            parameters=[r.nu for r in converged],
            states=states,
            interior=interior,
            fingerprint=disc.fingerprint,
        )

    @staticmethod
    def _intermediate(previous: float, target: float, step: Optional[float]) -> List[float]:
        """Parameters strictly between previous and target so no move exceeds step"""
        if step is None or previous - target <= step:
            return []
        n_moves = int(np.ceil((previous - target) / step))
        return np.linspace(previous, target, n_moves + 1)[1:-1].tolist()

    @staticmethod
    def _advance(
        problem: FlowProblem,
        field: Optional[FlowField],
        nu_from: Optional[float],
        nu_to: float,
        cfg: IterationConfig,
        threads: int = THREADS,
    ) -> SteadySolution:
        """
        Continue from a converged field at nu_from to nu_to

        Moves longer than cfg.continuation_step are split evenly. A move that fails is bisected
        and retried from the last converged field, at most cfg.max_step_halvings times.
        Intermediate solutions are not returned.
        """
        pending = [nu_to]
        if nu_from is not None:
            pending += OseenService._intermediate(nu_from, nu_to, cfg.continuation_step)[::-1]
        halvings = 0
        while True:
            nu = pending[-1]
            if nu != nu_to:
                logger.info(f"Continuation: intermediate nu={nu:.6g}")
            solution = OseenService.solve_steady(problem, nu, field, cfg, threads)
            if solution.converged:
                pending.pop()
                if not pending:
                    return solution
                field, nu_from = solution.field, nu
                continue
            if nu_from is None or halvings >= cfg.max_step_halvings:
                if nu != nu_to:
                    logger.warning(f"Continuation towards nu={nu_to:.6g} stalled at nu={nu:.6g}")
                    return solution.model_copy(update={"nu": nu_to})
                return solution
            halvings += 1
            midpoint = 0.5 * (nu_from + nu)
            logger.warning(f"nu={nu:.6g} not reached from nu={nu_from:.6g}; retrying through nu={midpoint:.6g}")
            pending.append(midpoint)

    @staticmethod
    def continuation_sweep(
        problem: FlowProblem,
        nu_values: Sequence[float],
        cfg: Optional[IterationConfig] = None,
        perturbed_problem: Optional[FlowProblem] = None,
        threads: int = THREADS,
    ) -> Tuple[List[SweepResult], SnapshotSet]:
        """
        Sweep viscosities from high to low, seeding each solve with the previous solution

        With a perturbed problem, every parameter is first solved with the perturbed inflow and
        the unperturbed solve starts from that field, until the unperturbed solution is
        asymmetric (BRANCH_ASYMMETRY); later parameters follow that branch.

        Args:
            problem: Unperturbed problem
            nu_values: Descending viscosities
            cfg: Iteration settings (continuation_step and max_step_halvings shape the moves)
            perturbed_problem: Branch-selecting problem

        Returns:
            (results in sweep order, snapshots of the converged parameters)
        """
        cfg = cfg or IterationConfig()
        nu_values = list(nu_values)
        if any(b >= a for a, b in zip(nu_values, nu_values[1:])):
            raise InvalidArgumentError("Continuation viscosities must be strictly descending")

        results: List[SweepResult] = []
        current: Optional[FlowField] = None
        previous: Optional[float] = None
        selecting = perturbed_problem is not None
        for nu in nu_values:
            solution: Optional[SteadySolution] = None
            if selecting:
                logger.info(f"Selecting a branch with the perturbed inflow at nu={nu:.6g}")
                seed = OseenService._advance(perturbed_problem, current, previous, nu, cfg, threads)
                if seed.converged:
                    solution = OseenService.solve_steady(problem, nu, seed.field, cfg, threads)
                if solution is None or not solution.converged:
                    logger.warning(f"nu={nu:.6g}: perturbed seed did not settle, continuing without it")
                    solution = None
            if solution is None:
                solution = OseenService._advance(problem, current, previous, nu, cfg, threads)

            result = OseenService._record(problem, solution)
            results.append(result)
            logger.info(
                f"nu={nu:.6g} (Re={result.reynolds:.2f}): {solution.status.value} in {solution.iterations} iterations, "
                f"asymmetry {result.asymmetry:.3e}"
            )
            if not solution.converged:
                logger.warning(f"Continuation halted at nu={nu:.6g}; {len(results) - 1} converged parameters kept")
                break
            if selecting and result.asymmetry >= BRANCH_ASYMMETRY:
                logger.info(f"Asymmetric branch reached at nu={nu:.6g}; perturbation dropped")
                selecting = False
            current = solution.field
            previous = nu

        return results, OseenService._snapshots(problem, results)

    @staticmethod
    def cold_start_sweep(
        problem: FlowProblem,
        nu_values: Sequence[float],
        cfg: Optional[IterationConfig] = None,
        threads: int = THREADS,
    ) -> Tuple[List[SweepResult], SnapshotSet]:
        """Every parameter from the zero field, parameters distributed over threads"""
        cfg = cfg or IterationConfig()
        ordered = sorted(nu_values, reverse=True)

        def solve(nu: float) -> SweepResult:
            return OseenService._record(problem, OseenService.solve_steady(problem, nu, None, cfg, threads=1))

        results = parallel_map(solve, ordered, threads)
        for result in results:
            if result.status != SolveStatus.CONVERGED:
                logger.warning(f"Cold start at nu={result.nu:.6g} did not converge")
        return results, OseenService._snapshots(problem, results)
