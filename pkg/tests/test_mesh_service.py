"""
Tests for the channel mesh, boundary tags and dof maps
"""

import os
import sys

import numpy as np
import pytest

sys.path.insert(0, os.path.abspath(os.path.join(os.path.dirname(__file__), "..")))

from errors import ConfigurationError, InvalidArgumentError
from models import BasisSpec, BoundaryTag, ElementSide
from Discretization.services.basis_service import BasisService
from Discretization.services.mesh_service import MeshService
from Solver.services.condensation_service import CondensationService


def build(nx, ny, lx, ly, order, span=(2.5, 3.5)):
    mesh = MeshService.build_channel_mesh(nx, ny, lx, ly)
    tags = MeshService.tag_boundaries(mesh, span)
    return MeshService.build_discretization(mesh, BasisSpec(order_velocity=order), tags)


def test_mesh_geometry():
    """Elements are numbered row by row and vertices run counter-clockwise"""
    mesh = MeshService.build_channel_mesh(8, 4, 36.0, 6.0)
    assert mesh.n_elements == 32
    assert mesh.hx == 4.5 and mesh.hy == 1.5
    assert np.allclose(mesh.vertices[9], [[4.5, 1.5], [9.0, 1.5], [9.0, 3.0], [4.5, 3.0]])
    assert np.allclose(mesh.jacobian, 4.5 * 1.5 / 4.0)
    # 7 * 4 vertical plus 8 * 3 horizontal interior edges
    assert len(mesh.shared_edges) == 52
    assert np.all(mesh.shared_edges[:, 4] == 1)
    assert len(mesh.boundary_edges) == 24


def test_invalid_mesh_rejected():
    """Non-positive sizes are invalid"""
    with pytest.raises(InvalidArgumentError):
        MeshService.build_channel_mesh(0, 4, 36.0, 6.0)
    with pytest.raises(InvalidArgumentError):
        MeshService.build_channel_mesh(8, 4, -1.0, 6.0)


def test_boundary_tags():
    """Left edges overlapping the window are inflow, the right side is outflow"""
    mesh = MeshService.build_channel_mesh(8, 4, 36.0, 6.0)
    tags = MeshService.tag_boundaries(mesh, (2.5, 3.5))
    tagged = dict(zip(map(tuple, tags.edges.tolist()), tags.tags))
    assert tags.tags.count(BoundaryTag.INFLOW) == 2
    assert tags.tags.count(BoundaryTag.OUTFLOW) == 4
    assert tagged[(8, int(ElementSide.LEFT))] == BoundaryTag.INFLOW
    assert tagged[(16, int(ElementSide.LEFT))] == BoundaryTag.INFLOW
    assert tagged[(0, int(ElementSide.LEFT))] == BoundaryTag.WALL
    assert tagged[(7, int(ElementSide.BOTTOM))] == BoundaryTag.WALL
    assert tags.has_outflow


def test_strict_inflow_requires_aligned_span():
    """Without sub-edge projection the window must sit on element edges"""
    mesh = MeshService.build_channel_mesh(8, 4, 36.0, 6.0)
    with pytest.raises(ConfigurationError):
        MeshService.tag_boundaries(mesh, (2.5, 3.5), subedge_projection=False)
    tags = MeshService.tag_boundaries(mesh, (1.5, 4.5), subedge_projection=False)
    assert tags.tags.count(BoundaryTag.INFLOW) == 2


def test_invalid_span_rejected():
    """An empty or out-of-domain span is a configuration error"""
    mesh = MeshService.build_channel_mesh(8, 4, 36.0, 6.0)
    with pytest.raises(ConfigurationError):
        MeshService.tag_boundaries(mesh, (3.0, 2.0))
    with pytest.raises(ConfigurationError):
        MeshService.tag_boundaries(mesh, (5.0, 7.0))


def test_default_dof_counts():
    """8x4 elements at p = 12"""
    disc = build(8, 4, 36.0, 6.0, 12)
    counts = MeshService.global_dof_counts(disc)
    assert counts["local_boundary_velocity"] == 3072
    assert counts["global_boundary_velocity"] == 1762
    assert counts["interior_velocity"] == 7744
    assert counts["pressure"] == 3872
    assert counts["total"] == 13378
    assert counts["schur"] == 1762 + 32


def test_shared_edge_modes_match():
    """Both elements of a shared edge map its modes to the same global dofs"""
    disc = build(2, 1, 2.0, 1.0, 3, span=(0.25, 0.75))
    maps = disc.maps
    start, end, edge = BasisService.edge_modes(3, ElementSide.RIGHT)
    left = maps.gather_index[0, [start, end] + edge]
    start, end, edge = BasisService.edge_modes(3, ElementSide.LEFT)
    right = maps.gather_index[1, [start, end] + edge]
    assert len(left) == 4
    assert np.array_equal(left, right)
    assert np.all(maps.gather_sign == 1.0)
    # 6 vertices + 7 edges * 2 edge modes
    assert maps.n_scalar_boundary == 20


def test_single_element_gather_is_identity():
    """One element: every local boundary dof is its own global dof"""
    disc = build(1, 1, 1.0, 1.0, 4, span=(0.0, 1.0))
    gather = disc.maps.gather.toarray()
    assert np.array_equal(gather, np.eye(32))
    assert np.all(disc.maps.multiplicity == 1.0)


def test_dirichlet_mask_excludes_outflow_edge_modes():
    """Edge modes on the outflow are free; corner vertices on walls stay fixed"""
    disc = build(2, 2, 4.0, 2.0, 4, span=(0.5, 1.5))
    maps = disc.maps
    start, end, edge = BasisService.edge_modes(4, ElementSide.RIGHT)
    outflow_edge = maps.gather_index[1, edge]
    assert not maps.dirichlet_mask[outflow_edge].any()
    assert maps.dirichlet_mask[maps.gather_index[1, start]]
    _, _, edge = BasisService.edge_modes(4, ElementSide.LEFT)
    assert maps.dirichlet_mask[maps.gather_index[0, edge]].all()
    assert maps.pressure_pin is None


def test_pressure_pin_without_outflow():
    """All-Dirichlet problems pin the first element's mean pressure"""
    mesh = MeshService.build_channel_mesh(2, 2, 1.5, 2.0, origin=(-0.5, -0.5))
    tags = MeshService.tag_dirichlet_everywhere(mesh)
    maps = MeshService.build_dof_maps(mesh, BasisSpec(order_velocity=4), tags)
    assert maps.pressure_pin == 0
    assert maps.dirichlet_mask.all()


def test_mean_pressure_permutation():
    """Means come first, the remaining modes follow element by element"""
    disc = build(2, 2, 4.0, 2.0, 4, span=(0.5, 1.5))
    maps = disc.maps
    pressure = np.arange(4 * 9, dtype=float).reshape(4, 9)
    hat = CondensationService.to_hat_pressure(pressure, maps)
    assert np.array_equal(hat[:4], [0.0, 9.0, 18.0, 27.0])
    assert np.array_equal(hat[4:12], np.arange(1.0, 9.0))
    assert np.array_equal(CondensationService.from_hat_pressure(hat, maps), pressure)


def test_fingerprint():
    """Identical inputs give identical fingerprints; the order changes it"""
    a = build(2, 2, 4.0, 2.0, 4, span=(0.5, 1.5))
    b = build(2, 2, 4.0, 2.0, 4, span=(0.5, 1.5))
    c = build(2, 2, 4.0, 2.0, 5, span=(0.5, 1.5))
    assert a.fingerprint == b.fingerprint
    assert a.fingerprint != c.fingerprint
    assert len(a.fingerprint) == 64


if __name__ == "__main__":
    pytest.main([__file__])
