"""
Tests for POD truncation
"""

import os
import sys

import numpy as np
import pytest

sys.path.insert(0, os.path.abspath(os.path.join(os.path.dirname(__file__), "..")))

from errors import InvalidArgumentError
from models import PodCriterion, SnapshotSet
from Reduction.services.pod_service import PodService


def snapshots_with_spectrum(singular_values, rows=20, seed=0):
    rng = np.random.default_rng(seed)
    k = len(singular_values)
    u, _ = np.linalg.qr(rng.standard_normal((rows, k)))
    v, _ = np.linalg.qr(rng.standard_normal((k, k)))
    return u @ np.diag(singular_values) @ v.T


def test_energy_threshold_selects_modes():
    """The smallest N whose cumulative energy reaches the threshold"""
    matrix = snapshots_with_spectrum([10.0, 1.0, 0.1])
    assert PodService.pod_matrix(matrix, 0.95).n_modes == 1
    assert PodService.pod_matrix(matrix, 0.99).n_modes == 2
    assert PodService.pod_matrix(matrix, 0.999).n_modes == 2
    assert PodService.pod_matrix(matrix, 1.0).n_modes == 3


def test_modes_are_orthonormal():
    """Retained modes are orthonormal left singular vectors"""
    matrix = snapshots_with_spectrum([5.0, 3.0, 1.0, 0.5])
    pod = PodService.pod_matrix(matrix, 1.0)
    assert np.allclose(pod.modes.T @ pod.modes, np.eye(pod.n_modes))
    assert np.allclose(pod.singular_values, [5.0, 3.0, 1.0, 0.5])
    # full basis reproduces the snapshots
    assert np.allclose(pod.modes @ (pod.modes.T @ matrix), matrix)


def test_truncation_capped_at_numerical_rank():
    """Rank-deficient snapshots never yield more modes than their rank"""
    base = snapshots_with_spectrum([2.0, 1.0])
    matrix = np.hstack([base, base[:, :1] + base[:, 1:]])
    pod = PodService.pod_matrix(matrix, 1.0)
    assert pod.n_modes == 2
    assert np.isclose(pod.energy_fraction, 1.0)
    assert pod.truncation_tail < 1e-6


def test_mode_fraction_criterion():
    """mode_fraction keeps ceil(fraction * k) modes"""
    matrix = snapshots_with_spectrum([4.0, 3.0, 2.0, 1.0])
    pod = PodService.pod_matrix(matrix, 0.5, PodCriterion.MODE_FRACTION)
    assert pod.n_modes == 2
    assert pod.criterion == PodCriterion.MODE_FRACTION


def test_retained_energy_and_tail():
    """Energy fraction and tail follow the singular values"""
    pod = PodService.pod_matrix(snapshots_with_spectrum([3.0, 1.0]), 0.5)
    assert pod.n_modes == 1
    assert np.isclose(pod.energy_fraction, 0.9)
    assert np.isclose(pod.truncation_tail, np.sqrt(0.1))


def test_invalid_inputs_rejected():
    """Empty snapshot sets and thresholds outside (0, 1] are invalid"""
    with pytest.raises(InvalidArgumentError):
        PodService.pod_matrix(np.zeros((5, 0)))
    with pytest.raises(InvalidArgumentError):
        PodService.pod_matrix(np.ones((5, 2)), 0.0)
    with pytest.raises(InvalidArgumentError):
        PodService.pod_matrix(np.ones((5, 2)), 1.5)
    empty = SnapshotSet(parameters=[], states=np.zeros((5, 0)), interior=np.zeros((3, 0)), fingerprint="x")
    with pytest.raises(InvalidArgumentError):
        PodService.pod(empty)


def test_pod_of_snapshot_set():
    """pod() decomposes the state columns"""
    states = snapshots_with_spectrum([2.0, 1.0], rows=8)
    snapshots = SnapshotSet(parameters=[0.2, 0.1], states=states, interior=np.ones((3, 2)), fingerprint="x")
    pod = PodService.pod(snapshots, 1.0)
    assert pod.modes.shape == (8, 2)


def test_spectrum_table():
    """One row per singular value with cumulative energy and retained flag"""
    pod = PodService.pod_matrix(snapshots_with_spectrum([3.0, 1.0]), 0.5)
    table = PodService.spectrum_table(pod)
    assert list(table.columns) == ["index", "singular_value", "cumulative_energy", "retained"]
    assert table["index"].tolist() == [1, 2]
    assert table["retained"].tolist() == [True, False]
    assert np.isclose(table["cumulative_energy"].iloc[-1], 1.0)


if __name__ == "__main__":
    pytest.main([__file__])
