"""
Basis Service
Modal Legendre bases on the reference interval, Gauss-Lobatto-Legendre quadrature and
tensor-product tables on the reference square [-1, 1]^2.
"""

import logging
from functools import lru_cache
from typing import List, Tuple

import numpy as np
from numpy.polynomial import legendre as npleg
from scipy.special import eval_jacobi, eval_legendre

from errors import InvalidArgumentError
from models import BasisSpec, ElementSide, ModeTable, QuadratureRule, TensorTable

logger = logging.getLogger(__name__)

# Local vertex ids in the element mode order, counter-clockwise from (-1, -1)
VERTEX_MODES = ((0, 0), (1, 0), (1, 1), (0, 1))

# (start vertex, end vertex) of each side, following the edge mode parametrization
SIDE_VERTICES = {
    ElementSide.BOTTOM: (0, 1),
    ElementSide.RIGHT: (1, 2),
    ElementSide.TOP: (3, 2),
    ElementSide.LEFT: (0, 3),
}


class BasisService:

    @staticmethod
    @lru_cache(maxsize=None)
    def gauss_lobatto_rule(q: int) -> QuadratureRule:
        """
        Gauss-Lobatto-Legendre rule with q points

        Args:
            q: Number of points, including both endpoints

        Returns:
            Nodes (increasing) and weights, exact up to degree 2q - 3
        """
        if q < 2:
            raise InvalidArgumentError(f"Gauss-Lobatto rule needs at least 2 points, got {q}")

        n = q - 1
        if q == 2:
            interior = np.array([])
        else:
            dp = npleg.Legendre.basis(n).deriv()
            ddp = dp.deriv()
            interior = np.sort(np.real(dp.roots()))
            # companion-matrix roots polished by Newton on P'_{q-1}
            for _ in range(3):
                interior = interior - dp(interior) / ddp(interior)

        nodes = np.concatenate(([-1.0], interior, [1.0]))
        weights = 2.0 / (q * n * eval_legendre(n, nodes) ** 2)
        return QuadratureRule(nodes=nodes, weights=weights)

    @staticmethod
    def velocity_modes_at(order: int, x: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        """Boundary-adapted modes phi_0..phi_p and derivatives at points x, shape (len(x), p+1)"""
        x = np.asarray(x, dtype=float)
        values = np.zeros((len(x), order + 1))
        derivatives = np.zeros_like(values)

        values[:, 0] = 0.5 * (1.0 - x)
        values[:, order] = 0.5 * (1.0 + x)
        derivatives[:, 0] = -0.5
        derivatives[:, order] = 0.5

        bubble = 0.25 * (1.0 - x) * (1.0 + x)
        for i in range(1, order):
            n = i - 1
            jac = eval_jacobi(n, 1.0, 1.0, x)
            djac = 0.5 * (n + 3) * eval_jacobi(n - 1, 2.0, 2.0, x) if n > 0 else np.zeros_like(x)
            values[:, i] = bubble * jac
            derivatives[:, i] = -0.5 * x * jac + bubble * djac
        return values, derivatives

    @staticmethod
    def pressure_modes_at(order: int, x: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        """Legendre P_0..P_order and derivatives at points x"""
        x = np.asarray(x, dtype=float)
        values = np.stack([eval_legendre(n, x) for n in range(order + 1)], axis=1)
        derivatives = np.stack([npleg.Legendre.basis(n).deriv()(x) for n in range(order + 1)], axis=1)
        return values, derivatives

    @staticmethod
    @lru_cache(maxsize=None)
    def modal_basis_tables(spec: BasisSpec) -> Tuple[ModeTable, ModeTable]:
        """
        Tabulate the velocity and pressure bases at the quadrature nodes

        Args:
            spec: Basis orders and quadrature size

        Returns:
            (velocity table, pressure table)
        """
        rule = BasisService.gauss_lobatto_rule(spec.quad_points)
        p = spec.order_velocity

        v_values, v_derivs = BasisService.velocity_modes_at(p, rule.nodes)
        velocity = ModeTable(
            order=p,
            nodes=rule.nodes,
            values=v_values,
            derivatives=v_derivs,
            boundary_mode_ids=[0, p],
            interior_mode_ids=list(range(1, p)),
        )

        p_values, p_derivs = BasisService.pressure_modes_at(spec.order_pressure, rule.nodes)
        pressure = ModeTable(
            order=spec.order_pressure,
            nodes=rule.nodes,
            values=p_values,
            derivatives=p_derivs,
            boundary_mode_ids=[],
            interior_mode_ids=list(range(spec.order_pressure + 1)),
        )
        return velocity, pressure

    @staticmethod
    def local_mode_order(order: int) -> List[Tuple[int, int]]:
        """
        (i, j) index pairs of the 2D velocity modes in local order:
        4 vertices, then bottom/right/top/left edge modes, then interior modes with i outer
        """
        p = order
        modes = [(di * p, dj * p) for di, dj in VERTEX_MODES]
        modes += [(i, 0) for i in range(1, p)]
        modes += [(p, j) for j in range(1, p)]
        modes += [(i, p) for i in range(1, p)]
        modes += [(0, j) for j in range(1, p)]
        modes += [(i, j) for i in range(1, p) for j in range(1, p)]
        return modes

    @staticmethod
    def pressure_mode_order(order: int) -> List[Tuple[int, int]]:
        """(a, b) pairs of the 2D pressure modes, mean mode (0, 0) first"""
        return [(a, b) for a in range(order + 1) for b in range(order + 1)]

    @staticmethod
    def edge_modes(order: int, side: ElementSide) -> Tuple[int, int, List[int]]:
        """
        Local boundary mode ids on one side

        Returns:
            (start vertex mode, end vertex mode, edge modes k = 1..p-1)
        """
        start, end = SIDE_VERTICES[ElementSide(side)]
        offset = 4 + int(side) * (order - 1)
        return start, end, list(range(offset, offset + order - 1))

    @staticmethod
    def reference_gradients(table: ModeTable, rule: QuadratureRule) -> TensorTable:
        """
        2D tensor-product values and reference derivatives at the q*q quadrature grid

        Args:
            table: 1D mode table tabulated at the rule's nodes
            rule: Quadrature rule

        Returns:
            TensorTable with point k = a*q + b at (xi_a, eta_b)
        """
        if table.n_points != rule.n_points or not np.allclose(table.nodes, rule.nodes):
            raise InvalidArgumentError(
                f"Mode table has {table.n_points} nodes but quadrature rule has {rule.n_points}"
            )

        if table.boundary_mode_ids:
            pairs = BasisService.local_mode_order(table.order)
            n_boundary = 4 * table.order
        else:
            pairs = BasisService.pressure_mode_order(table.order)
            n_boundary = 0

        mode_i = np.array([i for i, _ in pairs], dtype=np.int64)
        mode_j = np.array([j for _, j in pairs], dtype=np.int64)
        q = rule.n_points

        # (a, b, mode) -> (a*q + b, mode)
        val = table.values
        der = table.derivatives
        values = (val[:, None, mode_i] * val[None, :, mode_j]).reshape(q * q, -1)
        d_xi = (der[:, None, mode_i] * val[None, :, mode_j]).reshape(q * q, -1)
        d_eta = (val[:, None, mode_i] * der[None, :, mode_j]).reshape(q * q, -1)
        weights = np.outer(rule.weights, rule.weights).ravel()

        return TensorTable(
            order=table.order,
            n_points=q,
            values=values,
            d_xi=d_xi,
            d_eta=d_eta,
            weights=weights,
            mode_i=mode_i,
            mode_j=mode_j,
            n_boundary=n_boundary,
        )

    @staticmethod
    def tensor_tables(spec: BasisSpec) -> Tuple[QuadratureRule, ModeTable, ModeTable, TensorTable, TensorTable]:
        """Everything an element needs for one BasisSpec"""
        rule = BasisService.gauss_lobatto_rule(spec.quad_points)
        velocity, pressure = BasisService.modal_basis_tables(spec)
        logger.debug(f"Tabulated p={spec.order_velocity} velocity / p={spec.order_pressure} pressure bases on {rule.n_points}^2 points")
        return (
            rule,
            velocity,
            pressure,
            BasisService.reference_gradients(velocity, rule),
            BasisService.reference_gradients(pressure, rule),
        )
