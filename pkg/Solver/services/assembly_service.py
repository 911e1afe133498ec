"""
Assembly Service
Per-element blocks of the discrete Oseen system

    [ A      -D_bnd^T   B     ] [v_bnd]   [f_bnd]
    [ -D_bnd  0        -D_int ] [p    ] = [g_p  ]
    [ B~^T   -D_int^T   C     ] [v_int]   [f_int]

with velocity components blocked (u_x modes, then u_y modes) inside each dof group.
"""

import logging
from typing import Callable, Optional, Tuple

import numpy as np

from errors import InvalidArgumentError
from models import Discretization, DofMaps, FlowField, LocalBlockSystem
from settings import THREADS
from utils.field_utils import check_field, quadrature_points, velocity_at_quadrature
from utils.parallel import element_chunks, parallel_map

logger = logging.getLogger(__name__)


class AssemblyService:

    @staticmethod
    def _convection(disc: Discretization, u_k: FlowField, threads: int) -> np.ndarray:
        """Scalar convection matrices N_e[i, j] = int beta_i (w . grad) beta_j, shape (n_el, n, n)"""
        table = disc.velocity_table
        scale = disc.mesh.element_scale
        weighted = table.weights[None, :] * disc.mesh.jacobian[:, None]
        w, _, _ = velocity_at_quadrature(disc, u_k.velocity)

        def chunk(ids: np.ndarray) -> np.ndarray:
            wx = weighted[ids] * w[ids, 0] / scale[ids, 0, None]
            wy = weighted[ids] * w[ids, 1] / scale[ids, 1, None]
            return (
                np.einsum("ki,ek,kj->eij", table.values, wx, table.d_xi, optimize=True)
                + np.einsum("ki,ek,kj->eij", table.values, wy, table.d_eta, optimize=True)
            )

        chunks = element_chunks(disc.n_elements, threads)
        return np.concatenate(parallel_map(chunk, chunks, threads), axis=0)

    @staticmethod
    def assemble_oseen(
        disc: Discretization,
        nu: float,
        u_k: Optional[FlowField] = None,
        forcing: Optional[Callable[[np.ndarray, np.ndarray], Tuple[np.ndarray, np.ndarray]]] = None,
        viscous: bool = True,
        convective: bool = True,
        pressure: bool = True,
        threads: int = THREADS,
    ) -> LocalBlockSystem:
        """
        Assemble the element blocks of the Oseen system linearized at u_k

        Args:
            disc: Discretization
            nu: Kinematic viscosity
            u_k: Linearization (advecting) field, None for the zero field
            forcing: Body force f(x, y) -> (f_x, f_y) at arrays of points
            viscous: Include nu * grad:grad
            convective: Include (u_k . grad) u
            pressure: Include the pressure/divergence couplings

        Returns:
            LocalBlockSystem without Dirichlet lifting
        """
        if viscous and nu <= 0:
            raise InvalidArgumentError(f"Viscosity must be positive, got {nu}")
        if u_k is not None:
            check_field(disc, u_k)

        table = disc.velocity_table
        ptable = disc.pressure_table
        mesh = disc.mesh
        n_el = disc.n_elements
        n, nb = table.n_modes, table.n_boundary
        n_p = ptable.n_modes
        sx = mesh.element_scale[:, 0]
        sy = mesh.element_scale[:, 1]
        w = table.weights

        scalar = np.zeros((n_el, n, n))
        if viscous:
            gxx = table.d_xi.T @ (w[:, None] * table.d_xi)
            gyy = table.d_eta.T @ (w[:, None] * table.d_eta)
            scalar += nu * ((sy / sx)[:, None, None] * gxx + (sx / sy)[:, None, None] * gyy)
        if convective and u_k is not None:
            scalar += AssemblyService._convection(disc, u_k, threads)

        bnd, inr = slice(0, nb), slice(nb, n)
        ni = n - nb

        def blocked(rows: slice, cols: slice, n_rows: int, n_cols: int) -> np.ndarray:
            out = np.zeros((n_el, 2 * n_rows, 2 * n_cols))
            out[:, :n_rows, :n_cols] = scalar[:, rows, cols]
            out[:, n_rows:, n_cols:] = scalar[:, rows, cols]
            return out

        a = blocked(bnd, bnd, nb, nb)
        b = blocked(bnd, inr, nb, ni)
        bt_tilde = blocked(inr, bnd, ni, nb)
        c = blocked(inr, inr, ni, ni)

        if pressure:
            px = ptable.values.T @ (w[:, None] * table.d_xi)
            py = ptable.values.T @ (w[:, None] * table.d_eta)
            # J / s_x = s_y and J / s_y = s_x on affine quads
            dx = sy[:, None, None] * px
            dy = sx[:, None, None] * py
        else:
            dx = np.zeros((n_el, n_p, n))
            dy = np.zeros((n_el, n_p, n))
        d_bnd = np.concatenate([dx[:, :, bnd], dy[:, :, bnd]], axis=2)
        d_int = np.concatenate([dx[:, :, inr], dy[:, :, inr]], axis=2)

        f_bnd = np.zeros((n_el, 2 * nb))
        f_int = np.zeros((n_el, 2 * ni))
        if forcing is not None:
            x, y = quadrature_points(disc)
            fx, fy = forcing(x, y)
            weighted = w[None, :] * mesh.jacobian[:, None]
            load_x = np.einsum("kn,ek->en", table.values, weighted * fx)
            load_y = np.einsum("kn,ek->en", table.values, weighted * fy)
            f_bnd = np.concatenate([load_x[:, bnd], load_y[:, bnd]], axis=1)
            f_int = np.concatenate([load_x[:, inr], load_y[:, inr]], axis=1)

        return LocalBlockSystem(
            nu=nu,
            a=a,
            b=b,
            bt_tilde=bt_tilde,
            c=c,
            d_bnd=d_bnd,
            d_int=d_int,
            f_bnd=f_bnd,
            f_int=f_int,
            g_p=np.zeros((n_el, n_p)),
            lift_bnd=np.zeros((n_el, 2 * nb)),
        )

    @staticmethod
    def local_lift(maps: DofMaps, dirichlet_values: np.ndarray) -> np.ndarray:
        """Scatter a global boundary vector to element boundary dofs: M g"""
        if dirichlet_values.shape != (maps.n_global_boundary,):
            raise InvalidArgumentError(
                f"Dirichlet vector has shape {dirichlet_values.shape}, expected ({maps.n_global_boundary},)"
            )
        return maps.gather_sign * dirichlet_values[maps.gather_index]

    @staticmethod
    def apply_dirichlet(system: LocalBlockSystem, maps: DofMaps, dirichlet_values: np.ndarray) -> LocalBlockSystem:
        """
        Lift prescribed boundary velocities into the right-hand side

        The returned system is posed for the homogeneous part v_bnd - M g; the Dirichlet
        dofs themselves are removed when the global hat system is formed.
        """
        lift = AssemblyService.local_lift(maps, dirichlet_values)
        if not np.any(lift):
            return system.model_copy()

        logger.debug(f"Lifting {int(maps.dirichlet_mask.sum())} Dirichlet dofs, max |g| = {np.abs(dirichlet_values).max():.3e}")
        return system.model_copy(
            update={
                "f_bnd": system.f_bnd - np.einsum("eij,ej->ei", system.a, lift),
                "g_p": system.g_p + np.einsum("eij,ej->ei", system.d_bnd, lift),
                "f_int": system.f_int - np.einsum("eij,ej->ei", system.bt_tilde, lift),
                "lift_bnd": system.lift_bnd + lift,
            }
        )

    @staticmethod
    def element_operator(system: LocalBlockSystem) -> np.ndarray:
        """Full per-element 3x3 block operator in [v_bnd, p, v_int] order, (n_el, m, m)"""
        n_el, nvb, _ = system.a.shape
        n_p = system.d_bnd.shape[1]
        nvi = system.c.shape[1]
        vb = slice(0, nvb)
        pr = slice(nvb, nvb + n_p)
        vi = slice(nvb + n_p, nvb + n_p + nvi)

        op = np.zeros((n_el, nvb + n_p + nvi, nvb + n_p + nvi))
        op[:, vb, vb] = system.a
        op[:, vb, pr] = -np.transpose(system.d_bnd, (0, 2, 1))
        op[:, vb, vi] = system.b
        op[:, pr, vb] = -system.d_bnd
        op[:, pr, vi] = -system.d_int
        op[:, vi, vb] = system.bt_tilde
        op[:, vi, pr] = -np.transpose(system.d_int, (0, 2, 1))
        op[:, vi, vi] = system.c
        return op

    @staticmethod
    def element_rhs(system: LocalBlockSystem) -> np.ndarray:
        return np.concatenate([system.f_bnd, system.g_p, system.f_int], axis=1)

    @staticmethod
    def split_velocity(field: FlowField, n_boundary: int) -> Tuple[np.ndarray, np.ndarray]:
        """(v_bnd, v_int) element vectors, each component-blocked"""
        n_el = field.velocity.shape[0]
        v_bnd = field.velocity[:, :, :n_boundary].reshape(n_el, -1)
        v_int = field.velocity[:, :, n_boundary:].reshape(n_el, -1)
        return v_bnd, v_int

    @staticmethod
    def join_velocity(v_bnd: np.ndarray, v_int: np.ndarray) -> np.ndarray:
        n_el = v_bnd.shape[0]
        return np.concatenate([v_bnd.reshape(n_el, 2, -1), v_int.reshape(n_el, 2, -1)], axis=2)

    @staticmethod
    def element_state(field: FlowField, n_boundary: int) -> np.ndarray:
        """Per-element [v_bnd, p, v_int] vectors"""
        v_bnd, v_int = AssemblyService.split_velocity(field, n_boundary)
        return np.concatenate([v_bnd, field.pressure, v_int], axis=1)

    @staticmethod
    def h1_norm_squared(disc: Discretization, velocity: np.ndarray) -> float:
        values, dx, dy = velocity_at_quadrature(disc, velocity)
        weighted = disc.velocity_table.weights[None, None, :] * disc.mesh.jacobian[:, None, None]
        return float(np.sum(weighted * (values ** 2 + dx ** 2 + dy ** 2)))

    @staticmethod
    def h1_norm(disc: Discretization, field: FlowField) -> float:
        """Velocity H1 norm: sum over elements of int |v|^2 + |grad v|^2"""
        check_field(disc, field)
        return float(np.sqrt(AssemblyService.h1_norm_squared(disc, field.velocity)))

    @staticmethod
    def h1_relative_change(disc: Discretization, a: FlowField, b: FlowField) -> float:
        """||a - b|| / ||a|| in H1; the absolute ||b|| when a vanishes"""
        check_field(disc, a)
        check_field(disc, b)
        norm_a = np.sqrt(AssemblyService.h1_norm_squared(disc, a.velocity))
        diff = np.sqrt(AssemblyService.h1_norm_squared(disc, a.velocity - b.velocity))
        if norm_a == 0.0:
            return float(diff)
        return float(diff / norm_a)
