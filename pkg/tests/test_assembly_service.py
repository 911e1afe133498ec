"""
Tests for the elemental Oseen blocks, Dirichlet lifting and H1 norms
"""

import os
import sys

import numpy as np
import pytest

sys.path.insert(0, os.path.abspath(os.path.join(os.path.dirname(__file__), "..")))

from errors import InvalidArgumentError
from models import BasisSpec, FlowField, InflowProfile
from Discretization.services.mesh_service import MeshService
from Solver.services.assembly_service import AssemblyService
from Solver.services.problem_service import ProblemService
from utils.field_utils import sample_field, velocity_at_quadrature
from helpers import linear_field, small_channel, uniform_field


def test_h1_norm_of_linear_field():
    """||(x, -y)||_H1^2 on [0, 36] x [0, 6] is 93312 + 2592 + 432"""
    problem = ProblemService.build_channel_problem(spec=BasisSpec(order_velocity=4))
    field = linear_field(problem)
    norm = AssemblyService.h1_norm(problem.discretization, field)
    assert np.isclose(norm ** 2, 96336.0, rtol=1e-12)


def test_h1_relative_change(channel):
    """Relative change is scale-free and falls back to the absolute norm at zero"""
    disc = channel.discretization
    field = linear_field(channel)
    scaled = field.model_copy(update={"velocity": 2.0 * field.velocity})
    assert np.isclose(AssemblyService.h1_relative_change(disc, field, scaled), 1.0)
    zero = FlowField.zeros(disc)
    assert np.isclose(
        AssemblyService.h1_relative_change(disc, zero, field),
        AssemblyService.h1_norm(disc, field),
    )


def test_block_shapes(channel):
    """Blocks follow the boundary/interior split, components blocked"""
    disc = channel.discretization
    local = AssemblyService.assemble_oseen(disc, 0.1)
    nb, ni, n_p = disc.n_boundary_modes, disc.n_interior_modes, disc.n_pressure
    assert local.a.shape == (4, 2 * nb, 2 * nb)
    assert local.b.shape == (4, 2 * nb, 2 * ni)
    assert local.bt_tilde.shape == (4, 2 * ni, 2 * nb)
    assert local.c.shape == (4, 2 * ni, 2 * ni)
    assert local.d_bnd.shape == (4, n_p, 2 * nb)
    assert local.d_int.shape == (4, n_p, 2 * ni)
    # no coupling between velocity components in the viscous part
    assert np.allclose(local.a[:, :nb, nb:], 0.0)


def test_viscous_blocks_symmetric_and_annihilate_constants(channel):
    """Stokes blocks: A and C symmetric, B = B-tilde transposed, constants in the kernel"""
    disc = channel.discretization
    local = AssemblyService.assemble_oseen(disc, 0.3)
    assert np.allclose(local.a, np.transpose(local.a, (0, 2, 1)))
    assert np.allclose(local.c, np.transpose(local.c, (0, 2, 1)))
    assert np.allclose(local.b, np.transpose(local.bt_tilde, (0, 2, 1)))

    constant = uniform_field(channel, 1.0, 1.0)
    v_bnd, _ = AssemblyService.split_velocity(constant, disc.n_boundary_modes)
    assert np.allclose(np.einsum("eij,ej->ei", local.a, v_bnd), 0.0, atol=1e-12)
    assert np.allclose(np.einsum("eij,ej->ei", local.bt_tilde, v_bnd), 0.0, atol=1e-12)


def test_divergence_free_field_has_zero_divergence_rows(channel):
    """(x, -y) is solenoidal, so D applied to it vanishes for every pressure mode"""
    disc = channel.discretization
    local = AssemblyService.assemble_oseen(disc, 1.0)
    v_bnd, v_int = AssemblyService.split_velocity(linear_field(channel), disc.n_boundary_modes)
    divergence = np.einsum("eij,ej->ei", local.d_bnd, v_bnd) + np.einsum("eij,ej->ei", local.d_int, v_int)
    assert np.allclose(divergence, 0.0, atol=1e-12)

    expanding = linear_field(channel, 1.0, 1.0)
    v_bnd, _ = AssemblyService.split_velocity(expanding, disc.n_boundary_modes)
    mean_divergence = np.einsum("eij,ej->ei", local.d_bnd, v_bnd)[:, 0]
    # div (x, y) = 2; the constant pressure mode integrates it over each 2 x 1 element
    assert np.allclose(mean_divergence, 4.0)


def test_convection_matches_load_vector(channel):
    """Advecting u = (x, 0) with w = (1, 0) gives the load of f = (1, 0)"""
    disc = channel.discretization
    advect = uniform_field(channel, 1.0, 0.0)
    convect = AssemblyService.assemble_oseen(
        disc, 1.0, advect, viscous=False, pressure=False
    )
    load = AssemblyService.assemble_oseen(
        disc, 1.0, None, forcing=lambda x, y: (np.ones_like(x), np.zeros_like(y)),
        viscous=False, convective=False, pressure=False,
    )
    v_bnd, _ = AssemblyService.split_velocity(linear_field(channel, 1.0, 0.0), disc.n_boundary_modes)
    assert np.allclose(np.einsum("eij,ej->ei", convect.a, v_bnd), load.f_bnd)
    assert np.allclose(np.einsum("eij,ej->ei", convect.bt_tilde, v_bnd), load.f_int)


def test_apply_dirichlet_lifts_right_hand_side(channel):
    """f_b -= A g, g_p += D_b g, f_i -= B-tilde^T g"""
    disc = channel.discretization
    local = AssemblyService.assemble_oseen(disc, 0.2)
    lifted = AssemblyService.apply_dirichlet(local, disc.maps, channel.dirichlet_values)
    g = channel.lift_local
    assert np.allclose(lifted.lift_bnd, g)
    assert np.allclose(lifted.f_bnd, -np.einsum("eij,ej->ei", local.a, g))
    assert np.allclose(lifted.g_p, np.einsum("eij,ej->ei", local.d_bnd, g))
    assert np.allclose(lifted.f_int, -np.einsum("eij,ej->ei", local.bt_tilde, g))
    # the original system is left untouched
    assert np.allclose(local.f_bnd, 0.0)


def test_local_lift_rejects_wrong_shape(channel):
    """The Dirichlet vector must have one entry per global boundary dof"""
    with pytest.raises(InvalidArgumentError):
        AssemblyService.local_lift(channel.discretization.maps, np.zeros(3))


def test_non_positive_viscosity_rejected(channel):
    """nu must be positive when the viscous term is assembled"""
    with pytest.raises(InvalidArgumentError):
        AssemblyService.assemble_oseen(channel.discretization, 0.0)


def test_element_operator_layout(channel):
    """[v_b, p, v_i] block order with the pressure couplings negated"""
    disc = channel.discretization
    local = AssemblyService.assemble_oseen(disc, 0.5)
    op = AssemblyService.element_operator(local)
    nvb, n_p = local.a.shape[1], local.d_bnd.shape[1]
    assert op.shape[1] == nvb + n_p + local.c.shape[1]
    assert np.allclose(op[:, :nvb, nvb:nvb + n_p], -np.transpose(local.d_bnd, (0, 2, 1)))
    assert np.allclose(op[:, nvb:nvb + n_p, nvb + n_p:], -local.d_int)
    assert np.allclose(op[:, nvb:nvb + n_p, nvb:nvb + n_p], 0.0)


def test_inflow_data_matches_profile():
    """Projected inflow data reproduces the parabola on an aligned window"""
    mesh = MeshService.build_channel_mesh(2, 4, 4.0, 4.0)
    tags = MeshService.tag_boundaries(mesh, (1.0, 2.0))
    disc = MeshService.build_discretization(mesh, BasisSpec(order_velocity=4), tags)
    problem = ProblemService.channel_problem(disc, (1.0, 2.0))
    field = FlowField.zeros(disc)
    v_int = np.zeros((disc.n_elements, 2 * disc.n_interior_modes))
    field = field.model_copy(update={"velocity": AssemblyService.join_velocity(problem.lift_local, v_int)})

    y = np.linspace(1.0, 2.0, 9)
    ux, uy, _ = sample_field(disc, field, np.zeros_like(y), y)
    assert np.allclose(ux, (y - 1.0) * (2.0 - y), atol=1e-12)
    assert np.allclose(uy, 0.0)


def test_inflow_profile_shape_and_tilt():
    """Parabola on the span, zero outside, and a tilt that raises one side only"""
    profile = InflowProfile(y0=1.0, y1=2.0, origin_y=0.5)
    y = np.array([1.0, 1.5, 2.0, 2.1, 3.0])
    ux, uy = profile(np.zeros_like(y), y)
    assert np.allclose(ux, [0.0, 0.0, 0.25, 0.24, 0.0])
    assert np.allclose(uy, 0.0)
    assert profile.breakpoints == (1.5, 2.5)

    tilted = profile.model_copy(update={"perturbation": 0.1})
    sides, _ = tilted(np.zeros(2), np.array([1.75, 2.25]))
    assert sides[0] < 0.1875 < sides[1]


def quadrature_oracle(disc, nu, u_k):
    """Scalar Oseen and divergence matrices summed point by point on every element"""
    table, ptable, mesh = disc.velocity_table, disc.pressure_table, disc.mesh
    n, n_p = table.n_modes, ptable.n_modes
    values, _, _ = velocity_at_quadrature(disc, u_k.velocity)
    scalar = np.zeros((disc.n_elements, n, n))
    div_x = np.zeros((disc.n_elements, n_p, n))
    div_y = np.zeros((disc.n_elements, n_p, n))
    for e in range(disc.n_elements):
        sx, sy = mesh.element_scale[e]
        for k in range(len(table.weights)):
            wk = table.weights[k] * mesh.jacobian[e]
            phi = table.values[k]
            gx = table.d_xi[k] / sx
            gy = table.d_eta[k] / sy
            ux, uy = values[e, 0, k], values[e, 1, k]
            for i in range(n):
                for j in range(n):
                    scalar[e, i, j] += wk * (nu * (gx[i] * gx[j] + gy[i] * gy[j]) + phi[i] * (ux * gx[j] + uy * gy[j]))
            div_x[e] += wk * np.outer(ptable.values[k], gx)
            div_y[e] += wk * np.outer(ptable.values[k], gy)
    return scalar, div_x, div_y


def test_blocks_match_pointwise_quadrature():
    """Cubic elements convected by a random field agree with a loop over quadrature points"""
    problem = small_channel(order=3)
    disc = problem.discretization
    rng = np.random.default_rng(3)
    u_k = FlowField.zeros(disc)
    u_k = u_k.model_copy(update={"velocity": rng.standard_normal(u_k.velocity.shape)})
    local = AssemblyService.assemble_oseen(disc, 0.3, u_k)
    scalar, div_x, div_y = quadrature_oracle(disc, 0.3, u_k)

    nb = disc.n_boundary_modes
    bnd, inr = slice(0, nb), slice(nb, None)
    for c in range(2):
        rb = slice(c * nb, (c + 1) * nb)
        ri = slice(c * (scalar.shape[1] - nb), (c + 1) * (scalar.shape[1] - nb))
        assert np.allclose(local.a[:, rb, rb], scalar[:, bnd, bnd], rtol=0.0, atol=1e-12)
        assert np.allclose(local.b[:, rb, ri], scalar[:, bnd, inr], rtol=0.0, atol=1e-12)
        assert np.allclose(local.bt_tilde[:, ri, rb], scalar[:, inr, bnd], rtol=0.0, atol=1e-12)
        assert np.allclose(local.c[:, ri, ri], scalar[:, inr, inr], rtol=0.0, atol=1e-12)
    assert np.allclose(local.d_bnd, np.concatenate([div_x[:, :, bnd], div_y[:, :, bnd]], axis=2), atol=1e-12)
    assert np.allclose(local.d_int, np.concatenate([div_x[:, :, inr], div_y[:, :, inr]], axis=2), atol=1e-12)


if __name__ == "__main__":
    pytest.main([__file__])
