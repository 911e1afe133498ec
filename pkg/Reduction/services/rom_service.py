"""
ROM Service
Reduced basis model of the Oseen system.

The reduced space is spanned by U = P M V (boundary velocity, mean and remaining pressures)
augmented with an interior-velocity basis W. The uncondensed element operator is affine in
nu and linear in the advecting field, so its projection splits exactly into offline pieces:

    A(nu, y)   = nu*K_visc + K_fixed + T_lift + sum_m y_m T[m]
    rhs(nu, y) = r_force - nu*r_visc - r_fixed - r_lift - R_conv y

The interior coordinates are eliminated online, leaving an N x N solve per iteration.
"""

import logging
import time
from typing import List, Optional, Tuple

import numpy as np
import scipy.linalg as la

from errors import ConsistencyError, InvalidArgumentError, SingularSystemError
from models import (
    FlowField, FlowProblem, IterationConfig, PodBasis, ReducedProjection, RomOperators,
    RomSolution, SolveStatus
)
from settings import THREADS
from Solver.services.assembly_service import AssemblyService
from Solver.services.condensation_service import CondensationService
from utils.acceleration import AndersonMixer
from utils.parallel import parallel_map

logger = logging.getLogger(__name__)

CONSISTENCY_TOL = 1e-9


class RomService:

    @staticmethod
    def build_projection(
        state_pod: PodBasis,
        interior_pod: PodBasis,
        problem: FlowProblem,
        fingerprint: str,
    ) -> ReducedProjection:
        """
        Compose U = P M V element by element and attach the interior basis W

        Args:
            state_pod: POD of hat-ordered states
            interior_pod: POD of interior velocities
            problem: Problem whose dof maps scatter the modes
            fingerprint: Fingerprint the PODs were computed on

        Returns:
            ReducedProjection
        """
        disc = problem.discretization
        if fingerprint != disc.fingerprint:
            raise InvalidArgumentError("POD basis was built on a different discretization")

        index, sign = CondensationService.hat_local_index(disc.maps)
        modes = state_pod.modes
        if modes.shape[0] != disc.maps.n_global_boundary + disc.n_elements * disc.n_pressure:
            raise InvalidArgumentError(f"State modes have {modes.shape[0]} rows, not matching the discretization")

        local_state = sign[:, :, None] * modes[index]
        local_interior = interior_pod.modes.reshape(disc.n_elements, 2 * disc.n_interior_modes, -1)
        return ReducedProjection(
            state_modes=modes,
            interior_modes=interior_pod.modes,
            local_state=local_state,
            local_interior=local_interior,
            fingerprint=fingerprint,
        )

    @staticmethod
    def augmented_basis(projection: ReducedProjection) -> np.ndarray:
        """Z_e = blockdiag(U_e, W_e) over element [v_bnd, p, v_int] vectors, (n_el, m, N + N_i)"""
        n_el, n_s, n = projection.local_state.shape
        n_vi, n_i = projection.local_interior.shape[1:]
        z = np.zeros((n_el, n_s + n_vi, n + n_i))
        z[:, :n_s, :n] = projection.local_state
        z[:, n_s:, n:] = projection.local_interior
        return z

    @staticmethod
    def _mode_field(problem: FlowProblem, projection: ReducedProjection, m: int) -> FlowField:
        """Velocity of augmented mode m without the lift"""
        disc = problem.discretization
        n_el = disc.n_elements
        nvb = 2 * disc.n_boundary_modes
        nvi = 2 * disc.n_interior_modes
        v_bnd = np.zeros((n_el, nvb))
        v_int = np.zeros((n_el, nvi))
        if m < projection.n_modes:
            v_bnd = projection.local_state[:, :nvb, m]
        else:
            v_int = projection.local_interior[:, :, m - projection.n_modes]
        return FlowField(
            velocity=AssemblyService.join_velocity(v_bnd, v_int),
            pressure=np.zeros((n_el, disc.n_pressure)),
        )

    @staticmethod
    def offline_build(
        problem: FlowProblem,
        projection: ReducedProjection,
        threads: int = THREADS,
        verify: bool = True,
    ) -> RomOperators:
        """
        Precompute every parameter-independent projected piece

        Args:
            problem: Full-order problem (Dirichlet lift, forcing)
            projection: Reduced projection
            threads: Worker threads over modes
            verify: Check the online operator against a direct projection at a random sample

        Returns:
            RomOperators
        """
        disc = problem.discretization
        start = time.perf_counter()
        z = RomService.augmented_basis(projection)
        n_total = z.shape[2]
        n_el = disc.n_elements
        lift = np.concatenate(
            [problem.lift_local, np.zeros((n_el, disc.n_pressure + 2 * disc.n_interior_modes))], axis=1
        )

        def project(op: np.ndarray) -> np.ndarray:
            return np.einsum("eia,eib->ab", z, op @ z, optimize=True)

        def project_lift(op: np.ndarray) -> np.ndarray:
            return np.einsum("eia,ei->a", z, np.einsum("eij,ej->ei", op, lift), optimize=True)

        viscous = AssemblyService.element_operator(
            AssemblyService.assemble_oseen(disc, 1.0, None, convective=False, pressure=False, threads=threads)
        )
        fixed = AssemblyService.element_operator(
            AssemblyService.assemble_oseen(disc, 1.0, None, viscous=False, convective=False, threads=threads)
        )
        lift_field = FlowField(
            velocity=AssemblyService.join_velocity(problem.lift_local, np.zeros((n_el, 2 * disc.n_interior_modes))),
            pressure=np.zeros((n_el, disc.n_pressure)),
        )
        lift_conv = AssemblyService.element_operator(
            AssemblyService.assemble_oseen(disc, 1.0, lift_field, viscous=False, pressure=False, threads=threads)
        )
        force = AssemblyService.element_rhs(
            AssemblyService.assemble_oseen(
                disc, 1.0, None, forcing=problem.forcing, viscous=False, convective=False, pressure=False
            )
        )

        def mode_slice(m: int) -> Tuple[np.ndarray, np.ndarray]:
            field = RomService._mode_field(problem, projection, m)
            op = AssemblyService.element_operator(
                AssemblyService.assemble_oseen(disc, 1.0, field, viscous=False, pressure=False, threads=1)
            )
            return project(op), project_lift(op)

        slices = parallel_map(mode_slice, range(n_total), threads)
        t_conv = np.stack([s[0] for s in slices]) if slices else np.zeros((0, 0, 0))
        rhs_conv = np.stack([s[1] for s in slices], axis=1) if slices else np.zeros((0, 0))

        ops = RomOperators(
            n_modes=projection.n_modes,
            n_interior=projection.n_interior,
            k_visc=project(viscous),
            k_fixed=project(fixed),
            t_lift=project(lift_conv),
            t_conv=t_conv,
            rhs_force=np.einsum("eia,ei->a", z, force),
            rhs_visc=project_lift(viscous),
            rhs_fixed=project_lift(fixed),
            rhs_lift=project_lift(lift_conv),
            rhs_conv=rhs_conv,
            fingerprint=projection.fingerprint,
        )
        logger.info(f"Offline phase: {projection.n_modes} + {projection.n_interior} reduced modes in {time.perf_counter() - start:.2f}s")

        if verify and n_total:
            rng = np.random.default_rng(0)
            error = RomService.consistency_error(problem, projection, ops, 1.0 / 133.0, rng.standard_normal(n_total))
            if error > CONSISTENCY_TOL:
                raise ConsistencyError(f"Online operator deviates from the projected full operator (relative {error:.2e})")
            logger.info(f"Offline-online consistency check passed (relative {error:.2e})")
        return ops

    @staticmethod
    def online_system(ops: RomOperators, nu: float, coords: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        """Reduced operator and right-hand side linearized at the coordinates"""
        matrix = nu * ops.k_visc + ops.k_fixed + ops.t_lift + np.tensordot(coords, ops.t_conv, axes=1)
        rhs = ops.rhs_force - nu * ops.rhs_visc - ops.rhs_fixed - ops.rhs_lift - ops.rhs_conv @ coords
        return matrix, rhs

    @staticmethod
    def projected_operator(problem: FlowProblem, projection: ReducedProjection, nu: float, coords: np.ndarray) -> np.ndarray:
        """Z^T K(nu, u(coords)) Z from a fresh full assembly"""
        field = RomService.recover_full(problem, projection, coords, nu)
        local = AssemblyService.assemble_oseen(problem.discretization, nu, field, forcing=problem.forcing)
        z = RomService.augmented_basis(projection)
        op = AssemblyService.element_operator(local)
        return np.einsum("eia,eib->ab", z, op @ z, optimize=True)

    @staticmethod
    def consistency_error(
        problem: FlowProblem,
        projection: ReducedProjection,
        ops: RomOperators,
        nu: float,
        coords: np.ndarray,
    ) -> float:
        """Relative Frobenius distance between the online and the directly projected operator"""
        online, _ = RomService.online_system(ops, nu, coords)
        direct = RomService.projected_operator(problem, projection, nu, coords)
        scale = np.linalg.norm(direct)
        return float(np.linalg.norm(online - direct) / (scale if scale > 0 else 1.0))

    @staticmethod
    def _solve_reduced(matrix: np.ndarray, rhs: np.ndarray, n_modes: int) -> np.ndarray:
        """Solve with the interior block eliminated first"""
        try:
            n_i = len(rhs) - n_modes
            if n_i == 0 or n_modes == 0:
                return la.solve(matrix, rhs)
            a_aa = matrix[:n_modes, :n_modes]
            a_ac = matrix[:n_modes, n_modes:]
            a_ca = matrix[n_modes:, :n_modes]
            a_cc = matrix[n_modes:, n_modes:]
            solved = la.solve(a_cc, np.hstack([a_ca, rhs[n_modes:, None]]))
            schur = a_aa - a_ac @ solved[:, :n_modes]
            a = la.solve(schur, rhs[:n_modes] - a_ac @ solved[:, -1])
            c = solved[:, -1] - solved[:, :n_modes] @ a
            return np.concatenate([a, c])
        except (la.LinAlgError, ValueError) as e:
            raise SingularSystemError(f"Reduced system of size {len(rhs)} is singular: {e}")

    @staticmethod
    def rom_solve(ops: RomOperators, nu: float, cfg: Optional[IterationConfig] = None) -> RomSolution:
        """
        Reduced Oseen fixed point from zero coordinates

        Stops on the Euclidean relative change of the reduced coordinates; iterates are
        mixed the same way as the full-order iteration.
        """
        if nu <= 0:
            raise InvalidArgumentError(f"Viscosity must be positive, got {nu}")
        cfg = cfg or IterationConfig()
        coords = np.zeros(ops.size)
        mixer = AndersonMixer(cfg.acceleration_depth, cfg.under_relaxation)
        history: List[float] = []
        times: List[float] = []
        status = SolveStatus.NOT_CONVERGED

        for k in range(1, cfg.max_iter + 1):
            start = time.perf_counter()
            matrix, rhs = RomService.online_system(ops, nu, coords)
            solved = RomService._solve_reduced(matrix, rhs, ops.n_modes)
            norm = np.linalg.norm(solved)
            diff = np.linalg.norm(solved - coords)
            change = float(diff / norm) if norm > 0 else float(diff)
            done = change < cfg.tol
            coords = solved if done else mixer.update(coords, solved)
            times.append(time.perf_counter() - start)
            history.append(change)
            if done:
                status = SolveStatus.CONVERGED
                break

        if status == SolveStatus.CONVERGED:
            logger.info(f"ROM nu={nu:.6g}: converged in {len(history)} iterations, median {np.median(times) * 1e3:.3f} ms/iteration")
        else:
            logger.warning(f"ROM nu={nu:.6g}: not converged after {cfg.max_iter} iterations (last change {history[-1]:.3e})")

        return RomSolution(
            nu=nu,
            coordinates=coords,
            n_modes=ops.n_modes,
            status=status,
            iterations=len(history),
            history=history,
            iteration_times=times,
        )

    @staticmethod
    def recover_full(
        problem: FlowProblem,
        projection: ReducedProjection,
        coords: np.ndarray,
        nu: Optional[float] = None,
    ) -> FlowField:
        """Lift reduced coordinates to a full field: U a + lift on the boundary, W c inside"""
        n = projection.n_modes
        state = projection.state_modes @ coords[:n]
        interior = projection.interior_modes @ coords[n:]
        return CondensationService.state_field(problem, state, interior, nu)

    @staticmethod
    def reduce_field(problem: FlowProblem, projection: ReducedProjection, field: FlowField) -> np.ndarray:
        """Orthogonal projection of a full field onto the reduced coordinates"""
        state, interior = CondensationService.hat_state(problem, field)
        return np.concatenate([projection.state_modes.T @ state, projection.interior_modes.T @ interior])

    @staticmethod
    def relative_h1_error(problem: FlowProblem, full: FlowField, rom: FlowField) -> float:
        """||u_full - u_rom||_H1 / ||u_full||_H1, velocity only"""
        disc = problem.discretization
        norm = AssemblyService.h1_norm(disc, full)
        if norm == 0.0:
            raise InvalidArgumentError("Reference field has zero H1 norm")
        diff = np.sqrt(AssemblyService.h1_norm_squared(disc, full.velocity - rom.velocity))
        return float(diff / norm)

    @staticmethod
    def online_sweep(ops: RomOperators, nu_values: List[float], cfg: Optional[IterationConfig] = None, threads: int = THREADS) -> List[RomSolution]:
        """Independent reduced solves, parameters distributed over threads"""
        return parallel_map(lambda nu: RomService.rom_solve(ops, nu, cfg), nu_values, threads)

    @staticmethod
    def projection_error(problem: FlowProblem, projection: ReducedProjection, field: FlowField) -> float:
        """Relative H1 distance between a full field and its orthogonal projection onto the reduced space"""
        coords = RomService.reduce_field(problem, projection, field)
        return RomService.relative_h1_error(problem, field, RomService.recover_full(problem, projection, coords))
