"""
Small problem builders and a dense monolithic reference solver for the tests
"""

from typing import Tuple

import numpy as np

from models import BasisSpec, DofMaps, FlowField, FlowProblem, KovasznayFlow, LocalBlockSystem
from Solver.services.assembly_service import AssemblyService
from Solver.services.problem_service import ProblemService


def small_channel(order: int = 4, nx: int = 2, ny: int = 2, perturbation: float = 0.0) -> FlowProblem:
    return ProblemService.build_channel_problem(
        nx=nx,
        ny=ny,
        lx=4.0,
        ly=2.0,
        spec=BasisSpec(order_velocity=order),
        inflow_span=(0.5, 1.5),
        perturbation=perturbation,
    )


def small_kovasznay(order: int = 4) -> Tuple[FlowProblem, KovasznayFlow]:
    spec = BasisSpec(order_velocity=order, over_integration=True)
    return ProblemService.build_kovasznay_problem(spec, 40.0)


def linear_field(problem: FlowProblem, ax: float = 1.0, ay: float = -1.0) -> FlowField:
    """u = (ax * x, ay * y), carried by the vertex modes alone"""
    disc = problem.discretization
    field = FlowField.zeros(disc)
    velocity = field.velocity.copy()
    velocity[:, 0, :4] = ax * disc.mesh.vertices[:, :, 0]
    velocity[:, 1, :4] = ay * disc.mesh.vertices[:, :, 1]
    return field.model_copy(update={"velocity": velocity})


def uniform_field(problem: FlowProblem, ux: float = 1.0, uy: float = 0.0) -> FlowField:
    disc = problem.discretization
    field = FlowField.zeros(disc)
    velocity = field.velocity.copy()
    velocity[:, 0, :4] = ux
    velocity[:, 1, :4] = uy
    return field.model_copy(update={"velocity": velocity})


def dense_solve(local: LocalBlockSystem, maps: DofMaps) -> FlowField:
    """
    Assemble the uncondensed global system [v_global, p, v_int] densely and solve it directly.
    Dirichlet rows and the pinned mean-pressure row are replaced by identity rows.
    """
    n_el, nvb, _ = local.a.shape
    n_p = local.d_bnd.shape[1]
    nvi = local.c.shape[1]
    n_gv = maps.n_global_boundary
    size = n_gv + n_el * n_p + n_el * nvi

    elements = np.arange(n_el)[:, None]
    index = np.concatenate(
        [
            maps.gather_index,
            n_gv + elements * n_p + np.arange(n_p)[None, :],
            n_gv + n_el * n_p + elements * nvi + np.arange(nvi)[None, :],
        ],
        axis=1,
    )
    sign = np.concatenate([maps.gather_sign, np.ones((n_el, n_p + nvi))], axis=1)

    operator = AssemblyService.element_operator(local)
    rhs = AssemblyService.element_rhs(local)
    matrix = np.zeros((size, size))
    vector = np.zeros(size)
    for e in range(n_el):
        s = sign[e]
        matrix[np.ix_(index[e], index[e])] += s[:, None] * operator[e] * s[None, :]
        np.add.at(vector, index[e], s * rhs[e])

    fixed = list(np.flatnonzero(maps.dirichlet_mask))
    if maps.pressure_pin is not None:
        fixed.append(n_gv + maps.pressure_pin * n_p)
    matrix[fixed, :] = 0.0
    matrix[fixed, fixed] = 1.0
    vector[fixed] = 0.0

    x = np.linalg.solve(matrix, vector)
    v_bnd = maps.gather_sign * x[:n_gv][maps.gather_index] + local.lift_bnd
    pressure = x[n_gv:n_gv + n_el * n_p].reshape(n_el, n_p)
    v_int = x[n_gv + n_el * n_p:].reshape(n_el, nvi)
    return FlowField(velocity=AssemblyService.join_velocity(v_bnd, v_int), pressure=pressure, nu=local.nu)


def relative_difference(a: np.ndarray, b: np.ndarray) -> float:
    scale = np.linalg.norm(b)
    return float(np.linalg.norm(a - b) / (scale if scale > 0 else 1.0))
