"""
Condensation Service
Two-level static condensation of the element Oseen blocks:
level 1 removes interior velocity per element, the mean-pressure permutation moves one
pressure mode per element next to the global boundary velocity, level 2 removes the
remaining pressure modes, and back-substitution reverts both steps.
"""

import logging
from typing import Any, List, Optional, Tuple

import numpy as np
import scipy.sparse as sp
from scipy.linalg import LinAlgError, lu_factor, lu_solve
from scipy.linalg.lapack import dgecon

from errors import CondensationError, SingularSystemError
from models import (
    DofMaps, FlowField, FlowProblem, HatSystem, Level1System, LocalBlockSystem, SchurSystem
)
from settings import THREADS
from Solver.services.assembly_service import AssemblyService
from utils.parallel import parallel_map

logger = logging.getLogger(__name__)

RCOND_MIN = 1e-12


class CondensationService:

    @staticmethod
    def _factorize(matrix: np.ndarray, element: int, label: str) -> Any:
        """LU factors with a reciprocal condition guard"""
        if matrix.size == 0:
            return None
        if not np.all(np.isfinite(matrix)):
            raise CondensationError(f"{label} block of element {element} has non-finite entries", element=element)
        try:
            factors = lu_factor(matrix, check_finite=False)
        except (LinAlgError, ValueError) as e:
            raise CondensationError(f"{label} block of element {element} could not be factorized: {e}", element=element)
        anorm = np.linalg.norm(matrix, 1)
        rcond, info = dgecon(factors[0], anorm, norm="1")
        if info != 0 or not rcond >= RCOND_MIN:
            raise CondensationError(
                f"{label} block of element {element} is singular or ill-conditioned (rcond={rcond:.2e})",
                element=element,
            )
        return factors

    @staticmethod
    def condense_level1(local: LocalBlockSystem, threads: int = THREADS) -> Level1System:
        """
        Eliminate interior velocity element by element

        Args:
            local: Element blocks (already lifted)
            threads: Worker threads over elements

        Returns:
            Level1System with retained C factorizations
        """
        nvb = local.a.shape[1]
        n_p = local.d_bnd.shape[1]

        def eliminate(e: int) -> Tuple[Any, np.ndarray, np.ndarray, np.ndarray]:
            factors = CondensationService._factorize(local.c[e], e, "C")
            stacked = np.hstack([local.bt_tilde[e], local.d_int[e].T, local.f_int[e][:, None]])
            solved = lu_solve(factors, stacked, check_finite=False)
            return factors, solved[:, :nvb], solved[:, nvb:nvb + n_p], solved[:, -1]

        results = parallel_map(eliminate, range(local.n_elements), threads)
        c_factors = [r[0] for r in results]
        c_inv_bt = np.stack([r[1] for r in results])
        c_inv_dt = np.stack([r[2] for r in results])
        c_inv_f = np.stack([r[3] for r in results])

        b = local.b
        d_int = local.d_int
        return Level1System(
            s_vv=local.a - b @ c_inv_bt,
            s_vp=-np.transpose(local.d_bnd, (0, 2, 1)) + b @ c_inv_dt,
            s_pv=d_int @ c_inv_bt - local.d_bnd,
            s_pp=-(d_int @ c_inv_dt),
            r_v=local.f_bnd - np.einsum("eij,ej->ei", b, c_inv_f),
            r_p=local.g_p + np.einsum("eij,ej->ei", d_int, c_inv_f),
            c_factors=c_factors,
        )

    @staticmethod
    def hat_local_index(maps: DofMaps) -> Tuple[np.ndarray, np.ndarray]:
        """
        Position of every element's [v_bnd, p] dof in the hat-ordered vector [v_global, means, rest]

        Returns:
            (index, sign), each (n_el, 2*n_bnd + n_p)
        """
        n_el = maps.n_elements
        n_p = maps.n_pressure
        n_gv = maps.n_global_boundary
        means = n_gv + np.arange(n_el)[:, None]
        rest = n_gv + n_el + np.arange(n_el)[:, None] * (n_p - 1) + np.arange(n_p - 1)[None, :]
        index = np.concatenate([maps.gather_index, means, rest], axis=1)
        sign = np.concatenate([maps.gather_sign, np.ones((n_el, n_p))], axis=1)
        return index, sign

    @staticmethod
    def to_hat_pressure(pressure: np.ndarray, maps: DofMaps) -> np.ndarray:
        """Element-ordered pressure (n_el, n_p) -> [means, rest] via P"""
        return pressure.ravel()[maps.mean_pressure_permutation]

    @staticmethod
    def from_hat_pressure(hat_pressure: np.ndarray, maps: DofMaps) -> np.ndarray:
        return hat_pressure[maps.inverse_pressure_permutation].reshape(maps.n_elements, maps.n_pressure)

    @staticmethod
    def gather_and_reorder(l1: Level1System, maps: DofMaps) -> HatSystem:
        """
        Gather boundary velocity through M, split pressure with P and fix constrained dofs

        Args:
            l1: Level-1 condensed element blocks
            maps: Dof maps of the discretization

        Returns:
            HatSystem over b = [global boundary velocity, element mean pressures] and p_hat
        """
        n_el = maps.n_elements
        n_gv = maps.n_global_boundary
        n_b = n_gv + n_el
        n_r = maps.n_pressure - 1

        index, sign = CondensationService.hat_local_index(maps)
        n_bcols = maps.gather_index.shape[1] + 1
        b_index = index[:, :n_bcols]
        b_sign = sign[:, :n_bcols]

        # element blocks over [local boundary velocity, mean pressure]
        top = np.concatenate([l1.s_vv, l1.s_vp[:, :, :1]], axis=2)
        bottom = np.concatenate([l1.s_pv[:, :1, :], l1.s_pp[:, :1, :1]], axis=2)
        a_local = np.concatenate([top, bottom], axis=1) * b_sign[:, :, None] * b_sign[:, None, :]
        b_local = np.concatenate([l1.s_vp[:, :, 1:], l1.s_pp[:, :1, 1:]], axis=1) * b_sign[:, :, None]
        c_local = np.concatenate([l1.s_pv[:, 1:, :], l1.s_pp[:, 1:, :1]], axis=2) * b_sign[:, None, :]
        d_hat = l1.s_pp[:, 1:, 1:]

        rest_index = np.arange(n_el)[:, None] * n_r + np.arange(n_r)[None, :]
        rows = np.repeat(b_index[:, :, None], b_index.shape[1], axis=2)
        cols = np.repeat(b_index[:, None, :], b_index.shape[1], axis=1)
        a_hat = sp.csr_matrix((a_local.ravel(), (rows.ravel(), cols.ravel())), shape=(n_b, n_b))

        br = np.repeat(b_index[:, :, None], n_r, axis=2)
        bc = np.repeat(rest_index[:, None, :], b_index.shape[1], axis=1)
        b_hat = sp.csr_matrix((b_local.ravel(), (br.ravel(), bc.ravel())), shape=(n_b, n_el * n_r))
        c_hat = sp.csr_matrix(
            (c_local.ravel(), (np.transpose(bc, (0, 2, 1)).ravel(), np.transpose(br, (0, 2, 1)).ravel())),
            shape=(n_el * n_r, n_b),
        )

        f_bnd = np.zeros(n_b)
        np.add.at(f_bnd, b_index[:, :-1].ravel(), (b_sign[:, :-1] * l1.r_v).ravel())
        f_bnd[n_gv:] = l1.r_p[:, 0]
        f_p = l1.r_p[:, 1:].ravel()

        fixed = np.zeros(n_b, dtype=bool)
        fixed[:n_gv] = maps.dirichlet_mask
        if maps.pressure_pin is not None:
            fixed[n_gv + maps.pressure_pin] = True

        return HatSystem(
            a_hat=a_hat,
            b_hat=b_hat,
            c_hat=c_hat,
            d_hat=d_hat,
            f_bnd=f_bnd,
            f_p=f_p,
            free_index=np.flatnonzero(~fixed),
            fixed_index=np.flatnonzero(fixed),
            fixed_values=np.zeros(int(fixed.sum())),
            element_b_index=b_index,
            element_b_sign=b_sign,
            b_local=b_local,
            c_local=c_local,
            n_velocity=n_gv,
        )

    @staticmethod
    def condense_level2(hat: HatSystem, threads: int = THREADS) -> SchurSystem:
        """
        Schur complement A_hat - B_hat D_hat^-1 C_hat and its right-hand side

        D_hat is block diagonal, so the correction is accumulated element by element.
        """
        n_el, n_r = hat.d_hat.shape[0], hat.d_hat.shape[1]
        matrix = hat.a_hat.toarray()
        rhs = hat.f_bnd.copy()

        if n_r == 0:
            d_factors: List[Optional[Any]] = [None] * n_el
        else:
            f_p = hat.f_p.reshape(n_el, n_r)

            def correct(e: int) -> Tuple[Any, np.ndarray, np.ndarray]:
                factors = CondensationService._factorize(hat.d_hat[e], e, "D-hat")
                solved = lu_solve(factors, np.hstack([hat.c_local[e], f_p[e][:, None]]), check_finite=False)
                return factors, hat.b_local[e] @ solved[:, :-1], hat.b_local[e] @ solved[:, -1]

            results = parallel_map(correct, range(n_el), threads)
            d_factors = [r[0] for r in results]
            # scatter sequentially: elements share b dofs
            for e, (_, block, vector) in enumerate(results):
                idx = hat.element_b_index[e]
                matrix[np.ix_(idx, idx)] -= block
                rhs[idx] -= vector

        return SchurSystem(
            matrix=matrix,
            rhs=rhs,
            d_factors=d_factors,
            free_index=hat.free_index,
            fixed_index=hat.fixed_index,
            fixed_values=hat.fixed_values,
            n_b=hat.n_b,
        )

    @staticmethod
    def solve_condensed(schur: SchurSystem) -> np.ndarray:
        """
        Dense LU solve of the Schur system on the free dofs

        Returns:
            The full b vector (fixed dofs set to their prescribed values)
        """
        free, fixed = schur.free_index, schur.fixed_index
        matrix = schur.matrix[np.ix_(free, free)]
        rhs = schur.rhs[free] - schur.matrix[np.ix_(free, fixed)] @ schur.fixed_values

        try:
            factors = lu_factor(matrix, check_finite=True)
        except (LinAlgError, ValueError) as e:
            raise SingularSystemError(f"Schur system factorization failed: {e}")
        pivots = np.abs(np.diag(factors[0]))
        if pivots.size and pivots.min() <= np.finfo(float).eps * pivots.max() * len(pivots):
            raise SingularSystemError(f"Schur system of size {len(free)} is numerically singular")

        solution = lu_solve(factors, rhs)
        rhs_norm = np.linalg.norm(rhs)
        residual = np.linalg.norm(matrix @ solution - rhs) / (rhs_norm if rhs_norm > 0 else 1.0)
        logger.info(f"Schur solve: {len(free)} free of {schur.n_b} dofs, relative residual {residual:.2e}")

        b = np.zeros(schur.n_b)
        b[free] = solution
        b[fixed] = schur.fixed_values
        return b

    @staticmethod
    def back_substitute(
        b: np.ndarray,
        schur: SchurSystem,
        hat: HatSystem,
        l1: Level1System,
        local: LocalBlockSystem,
        threads: int = THREADS,
    ) -> FlowField:
        """
        Recover remaining pressures, then interior velocity, element by element

        Args:
            b: Solved boundary velocity + mean pressure vector
            schur: Schur system with retained D-hat factors
            hat: Hat system
            l1: Level-1 system with retained C factors
            local: Lifted element blocks

        Returns:
            FlowField with the Dirichlet lift added back
        """
        n_el, n_r = hat.d_hat.shape[0], hat.d_hat.shape[1]
        f_p = hat.f_p.reshape(n_el, n_r)
        nvb = local.a.shape[1]

        def recover(e: int) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
            local_b = hat.element_b_sign[e] * b[hat.element_b_index[e]]
            if n_r:
                rest = lu_solve(schur.d_factors[e], f_p[e] - hat.c_local[e] @ b[hat.element_b_index[e]], check_finite=False)
            else:
                rest = np.zeros(0)
            v_bnd = local_b[:nvb]
            pressure = np.concatenate([local_b[nvb:], rest])
            rhs = local.f_int[e] - local.bt_tilde[e] @ v_bnd + local.d_int[e].T @ pressure
            v_int = lu_solve(l1.c_factors[e], rhs, check_finite=False)
            return v_bnd + local.lift_bnd[e], pressure, v_int

        results = parallel_map(recover, range(n_el), threads)
        v_bnd = np.stack([r[0] for r in results])
        pressure = np.stack([r[1] for r in results])
        v_int = np.stack([r[2] for r in results])
        return FlowField(
            velocity=AssemblyService.join_velocity(v_bnd, v_int),
            pressure=pressure,
            nu=local.nu,
        )

    @staticmethod
    def solve(local: LocalBlockSystem, maps: DofMaps, threads: int = THREADS) -> FlowField:
        """Full condensed pipeline on a lifted system"""
        l1 = CondensationService.condense_level1(local, threads)
        hat = CondensationService.gather_and_reorder(l1, maps)
        schur = CondensationService.condense_level2(hat, threads)
        b = CondensationService.solve_condensed(schur)
        return CondensationService.back_substitute(b, schur, hat, l1, local, threads)

    @staticmethod
    def hat_state(problem: FlowProblem, field: FlowField) -> Tuple[np.ndarray, np.ndarray]:
        """
        Homogeneous hat-ordered state and the interior velocity vector of a field

        Returns:
            ([v_global - g, means, rest], interior velocity stacked over elements)
        """
        maps = problem.discretization.maps
        nb = problem.discretization.n_boundary_modes
        v_bnd, v_int = AssemblyService.split_velocity(field, nb)

        gathered = np.zeros(maps.n_global_boundary)
        np.add.at(gathered, maps.gather_index.ravel(), (maps.gather_sign * (v_bnd - problem.lift_local)).ravel())
        gathered /= maps.multiplicity

        state = np.concatenate([gathered, CondensationService.to_hat_pressure(field.pressure, maps)])
        return state, v_int.ravel()

    @staticmethod
    def state_field(problem: FlowProblem, state: np.ndarray, interior: np.ndarray, nu: Optional[float] = None) -> FlowField:
        """Inverse of hat_state: scatter through M and P, re-add the lift"""
        disc = problem.discretization
        maps = disc.maps
        n_gv = maps.n_global_boundary
        v_bnd = maps.gather_sign * state[:n_gv][maps.gather_index] + problem.lift_local
        pressure = CondensationService.from_hat_pressure(state[n_gv:], maps)
        v_int = interior.reshape(disc.n_elements, -1)
        return FlowField(velocity=AssemblyService.join_velocity(v_bnd, v_int), pressure=pressure, nu=nu)
