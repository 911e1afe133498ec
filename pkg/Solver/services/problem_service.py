"""
Problem Service
Boundary data and problem builders: the expansion channel with a parabolic inflow window
and the Kovasznay flow used for p-convergence checks.
"""

import logging
from typing import Callable, Optional, Sequence, Tuple

import numpy as np
from numpy.polynomial.legendre import leggauss

from errors import InvalidArgumentError
from models import BasisSpec, BoundaryTag, Discretization, FlowField, FlowProblem, InflowProfile, KovasznayFlow
from Discretization.services.basis_service import BasisService
from Discretization.services.mesh_service import MeshService
from Solver.services.assembly_service import AssemblyService
from utils.field_utils import quadrature_points, velocity_at_quadrature

logger = logging.getLogger(__name__)

VelocityFunction = Callable[[np.ndarray, np.ndarray], Tuple[np.ndarray, np.ndarray]]


class ProblemService:

    @staticmethod
    def project_dirichlet_data(
        disc: Discretization,
        velocity_fn: VelocityFunction,
        breakpoints: Sequence[float] = (),
    ) -> np.ndarray:
        """
        Global boundary velocity vector carrying the Dirichlet data on inflow-tagged edges

        Vertex modes interpolate the data; edge modes are the L2 projection of the remainder,
        integrated with composite Gauss-Legendre rules split at the breakpoints (coordinates
        along the edge where the data has kinks). Wall edges stay zero.

        Args:
            disc: Discretization
            velocity_fn: Data u(x, y) -> (u_x, u_y)
            breakpoints: Kink positions along the edges (y for vertical, x for horizontal edges)

        Returns:
            Vector of length n_global_boundary
        """
        p = disc.spec.order_velocity
        maps = disc.maps
        scalar_index = maps.gather_index[:, : maps.gather_index.shape[1] // 2]
        scalar_sign = maps.gather_sign[:, : maps.gather_sign.shape[1] // 2]
        n_scalar = maps.n_scalar_boundary
        values = np.zeros(maps.n_global_boundary)

        gauss_t, gauss_w = leggauss(p + 4)

        for (element, side), tag in zip(disc.tags.edges, disc.tags.tags):
            if tag != BoundaryTag.INFLOW:
                continue
            start_mode, end_mode, edge_ids = BasisService.edge_modes(p, side)
            start, end = MeshService.side_span(disc.mesh, element, side)
            vertical = abs(end[0] - start[0]) < abs(end[1] - start[1])
            axis = 1 if vertical else 0

            def point(t: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
                return (
                    0.5 * (1.0 - t) * start[0] + 0.5 * (1.0 + t) * end[0],
                    0.5 * (1.0 - t) * start[1] + 0.5 * (1.0 + t) * end[1],
                )

            ux_ends, uy_ends = velocity_fn(*point(np.array([-1.0, 1.0])))

            cuts = [-1.0, 1.0]
            length = end[axis] - start[axis]
            for b in breakpoints:
                t = 2.0 * (b - start[axis]) / length - 1.0
                if -1.0 < t < 1.0:
                    cuts.append(t)
            cuts = np.unique(cuts)
            t_pts = np.concatenate([0.5 * (hi - lo) * gauss_t + 0.5 * (hi + lo) for lo, hi in zip(cuts[:-1], cuts[1:])])
            t_wts = np.concatenate([0.5 * (hi - lo) * gauss_w for lo, hi in zip(cuts[:-1], cuts[1:])])

            modes, _ = BasisService.velocity_modes_at(p, t_pts)
            bubbles = modes[:, 1:p]
            mass = bubbles.T @ (t_wts[:, None] * bubbles)
            ux, uy = velocity_fn(*point(t_pts))

            for component, data, ends in ((0, ux, ux_ends), (1, uy, uy_ends)):
                remainder = data - ends[0] * modes[:, 0] - ends[1] * modes[:, p]
                coeffs = np.linalg.solve(mass, bubbles.T @ (t_wts * remainder))
                offset = component * n_scalar
                values[offset + scalar_index[element, start_mode]] = ends[0]
                values[offset + scalar_index[element, end_mode]] = ends[1]
                values[offset + scalar_index[element, edge_ids]] = scalar_sign[element, edge_ids] * coeffs

        values[~maps.dirichlet_mask] = 0.0
        return values

    @staticmethod
    def problem_from(
        disc: Discretization,
        velocity_fn: VelocityFunction,
        breakpoints: Sequence[float] = (),
        forcing: Optional[Callable[..., Tuple[np.ndarray, np.ndarray]]] = None,
        label: str = "channel",
    ) -> FlowProblem:
        g = ProblemService.project_dirichlet_data(disc, velocity_fn, breakpoints)
        return FlowProblem(
            discretization=disc,
            dirichlet_values=g,
            lift_local=AssemblyService.local_lift(disc.maps, g),
            forcing=forcing,
            label=label,
        )

    @staticmethod
    def build_channel_problem(
        nx: int = 8,
        ny: int = 4,
        lx: float = 36.0,
        ly: float = 6.0,
        spec: Optional[BasisSpec] = None,
        inflow_span: Tuple[float, float] = (2.5, 3.5),
        perturbation: float = 0.0,
        strict_inflow: bool = False,
    ) -> FlowProblem:
        """
        Expansion channel: parabolic inflow window on the left, outflow at x = lx, walls elsewhere

        Args:
            nx, ny, lx, ly: Mesh parameters
            spec: Basis (default p = 12, q = p + 2)
            inflow_span: (y0, y1) of the inflow window
            perturbation: One-sided inflow tilt amplitude used for branch selection
            strict_inflow: Reject spans that cut through element edges

        Returns:
            FlowProblem
        """
        spec = spec or BasisSpec(order_velocity=12)
        mesh = MeshService.build_channel_mesh(nx, ny, lx, ly)
        tags = MeshService.tag_boundaries(mesh, inflow_span, subedge_projection=not strict_inflow)
        disc = MeshService.build_discretization(mesh, spec, tags)
        return ProblemService.channel_problem(disc, inflow_span, perturbation)

    @staticmethod
    def channel_problem(disc: Discretization, inflow_span: Tuple[float, float], perturbation: float = 0.0) -> FlowProblem:
        """Channel problem on an existing discretization (used to switch the perturbation on and off)"""
        profile = InflowProfile(
            y0=inflow_span[0], y1=inflow_span[1], origin_y=disc.mesh.origin[1], perturbation=perturbation
        )
        label = "channel-perturbed" if perturbation else "channel"
        return ProblemService.problem_from(disc, profile, profile.breakpoints, label=label)

    @staticmethod
    def build_kovasznay_problem(
        spec: BasisSpec,
        reynolds: float = 40.0,
        nx: int = 2,
        ny: int = 2,
    ) -> Tuple[FlowProblem, KovasznayFlow]:
        """Kovasznay flow on [-0.5, 1] x [-0.5, 1.5] with exact Dirichlet data everywhere"""
        flow = KovasznayFlow(reynolds=reynolds)
        mesh = MeshService.build_channel_mesh(nx, ny, 1.5, 2.0, origin=(-0.5, -0.5))
        tags = MeshService.tag_dirichlet_everywhere(mesh)
        disc = MeshService.build_discretization(mesh, spec, tags)
        return ProblemService.problem_from(disc, flow, label="kovasznay"), flow

    @staticmethod
    def exact_h1_error(disc: Discretization, field: FlowField, flow: KovasznayFlow) -> Tuple[float, float]:
        """
        Velocity H1 error against the closed-form solution, by quadrature

        Returns:
            (absolute error, error relative to the exact H1 norm)
        """
        if field.velocity.shape[0] != disc.n_elements:
            raise InvalidArgumentError("Field does not belong to this discretization")
        x, y = quadrature_points(disc)
        values, dx, dy = velocity_at_quadrature(disc, field.velocity)
        ux, uy = flow(x, y)
        gxx, gxy, gyx, gyy = flow.gradient(x, y)
        weighted = disc.velocity_table.weights[None, :] * disc.mesh.jacobian[:, None]

        error = (
            (values[:, 0] - ux) ** 2 + (values[:, 1] - uy) ** 2
            + (dx[:, 0] - gxx) ** 2 + (dy[:, 0] - gxy) ** 2
            + (dx[:, 1] - gyx) ** 2 + (dy[:, 1] - gyy) ** 2
        )
        exact = ux ** 2 + uy ** 2 + gxx ** 2 + gxy ** 2 + gyx ** 2 + gyy ** 2
        absolute = float(np.sqrt(np.sum(weighted * error)))
        return absolute, absolute / float(np.sqrt(np.sum(weighted * exact)))
