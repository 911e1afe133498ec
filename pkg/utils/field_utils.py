from typing import Tuple

import numpy as np

from errors import InvalidArgumentError
from models import Discretization, FlowField
from Discretization.services.basis_service import BasisService


def quadrature_points(disc: Discretization) -> Tuple[np.ndarray, np.ndarray]:
    """Physical coordinates of every element's quadrature points, each (n_el, q*q)"""
    nodes = disc.rule.nodes
    xi = np.repeat(nodes, len(nodes))
    eta = np.tile(nodes, len(nodes))
    center = disc.mesh.element_center
    scale = disc.mesh.element_scale
    x = center[:, 0:1] + scale[:, 0:1] * xi[None, :]
    y = center[:, 1:2] + scale[:, 1:2] * eta[None, :]
    return x, y


def check_field(disc: Discretization, field: FlowField) -> None:
    expected_v = (disc.n_elements, 2, disc.n_modes)
    expected_p = (disc.n_elements, disc.n_pressure)
    if field.velocity.shape != expected_v or field.pressure.shape != expected_p:
        raise InvalidArgumentError(
            f"Field shapes {field.velocity.shape}/{field.pressure.shape} do not match "
            f"discretization {expected_v}/{expected_p}"
        )


def velocity_at_quadrature(disc: Discretization, velocity: np.ndarray) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """
    Velocity and its physical gradient at the quadrature points

    Returns:
        values, d/dx, d/dy, each (n_el, 2, q*q)
    """
    table = disc.velocity_table
    scale = disc.mesh.element_scale
    values = np.einsum("kn,ecn->eck", table.values, velocity)
    dx = np.einsum("kn,ecn->eck", table.d_xi, velocity) / scale[:, 0, None, None]
    dy = np.einsum("kn,ecn->eck", table.d_eta, velocity) / scale[:, 1, None, None]
    return values, dx, dy


def locate_points(disc: Discretization, x: np.ndarray, y: np.ndarray) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Element id and reference coordinates of physical points (clamped to the domain)"""
    mesh = disc.mesh
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    i = np.clip(np.floor((x - mesh.origin[0]) / mesh.hx).astype(np.int64), 0, mesh.nx - 1)
    j = np.clip(np.floor((y - mesh.origin[1]) / mesh.hy).astype(np.int64), 0, mesh.ny - 1)
    element = j * mesh.nx + i
    center = mesh.element_center[element]
    scale = mesh.element_scale[element]
    xi = np.clip((x - center[:, 0]) / scale[:, 0], -1.0, 1.0)
    eta = np.clip((y - center[:, 1]) / scale[:, 1], -1.0, 1.0)
    return element, xi, eta


def sample_field(disc: Discretization, field: FlowField, x: np.ndarray, y: np.ndarray) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """
    Evaluate u_x, u_y and p at arbitrary points

    Args:
        disc: Discretization the field lives on
        field: Modal coefficients
        x, y: Point coordinates (1D arrays of equal length)

    Returns:
        (u_x, u_y, p)
    """
    check_field(disc, field)
    element, xi, eta = locate_points(disc, x, y)

    p = disc.spec.order_velocity
    vx, _ = BasisService.velocity_modes_at(p, xi)
    vy, _ = BasisService.velocity_modes_at(p, eta)
    table = disc.velocity_table
    modes = vx[:, table.mode_i] * vy[:, table.mode_j]
    velocity = np.einsum("kn,kcn->kc", modes, field.velocity[element])

    order_p = disc.spec.order_pressure
    px, _ = BasisService.pressure_modes_at(order_p, xi)
    py, _ = BasisService.pressure_modes_at(order_p, eta)
    ptable = disc.pressure_table
    pmodes = px[:, ptable.mode_i] * py[:, ptable.mode_j]
    pressure = np.einsum("kn,kn->k", pmodes, field.pressure[element])

    return velocity[:, 0], velocity[:, 1], pressure


def uniform_grid(disc: Discretization, nx_points: int, ny_points: int) -> Tuple[np.ndarray, np.ndarray]:
    """Row-major uniform sample grid over the whole domain (x fastest)"""
    mesh = disc.mesh
    xs = np.linspace(mesh.origin[0], mesh.origin[0] + mesh.lx, nx_points)
    ys = np.linspace(mesh.origin[1], mesh.origin[1] + mesh.ly, ny_points)
    gx, gy = np.meshgrid(xs, ys)
    return gx.ravel(), gy.ravel()
