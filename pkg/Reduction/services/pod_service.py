"""
POD Service
Proper orthogonal decomposition of snapshot matrices by thin SVD.
"""

import logging
import math

import numpy as np
import pandas as pd
import scipy.linalg as la

from errors import InvalidArgumentError
from models import PodBasis, PodCriterion, SnapshotSet

logger = logging.getLogger(__name__)


class PodService:

    @staticmethod
    def cumulative_energy(singular_values: np.ndarray) -> np.ndarray:
        """Running fraction sum_{i<=n} s_i^2 / sum s_i^2"""
        energy = np.asarray(singular_values, dtype=float) ** 2
        total = energy.sum()
        if total == 0.0:
            return np.ones_like(energy)
        return np.cumsum(energy) / total

    @staticmethod
    def numerical_rank(singular_values: np.ndarray, shape: tuple) -> int:
        if len(singular_values) == 0 or singular_values[0] == 0.0:
            return 0
        tol = max(shape) * np.finfo(float).eps * singular_values[0]
        return int(np.sum(singular_values > tol))

    @staticmethod
    def pod_matrix(
        snapshots: np.ndarray,
        energy: float = 0.999,
        criterion: PodCriterion = PodCriterion.ENERGY,
    ) -> PodBasis:
        """
        POD basis of the columns of a snapshot matrix

        Args:
            snapshots: (n, k) matrix, one snapshot per column
            energy: Retained energy fraction (or mode fraction for the mode_fraction criterion)
            criterion: How `energy` selects the number of modes

        Returns:
            PodBasis with the first N left singular vectors
        """
        if snapshots.ndim != 2 or snapshots.shape[1] == 0:
            raise InvalidArgumentError("POD needs at least one snapshot")
        if not 0.0 < energy <= 1.0:
            raise InvalidArgumentError(f"Energy threshold must lie in (0, 1], got {energy}")

        u, s, _ = la.svd(snapshots, full_matrices=False)
        cumulative = PodService.cumulative_energy(s)
        rank = PodService.numerical_rank(s, snapshots.shape)

        if criterion == PodCriterion.MODE_FRACTION:
            n_modes = math.ceil(energy * len(s))
        else:
            # first index reaching the threshold, guarded against round-off in the last entry
            n_modes = int(np.searchsorted(cumulative, energy - 1e-14 * energy, side="left")) + 1

        if n_modes > rank:
            logger.warning(f"POD: {n_modes} modes requested but numerical rank is {rank}; truncating to rank")
            n_modes = rank
        n_modes = max(n_modes, 0)

        retained = float(cumulative[n_modes - 1]) if n_modes > 0 else 0.0
        logger.info(f"POD: kept {n_modes} of {len(s)} modes ({criterion.value}), retained energy {retained:.10f}")
        return PodBasis(
            modes=u[:, :n_modes].copy(),
            singular_values=s,
            n_modes=n_modes,
            energy_fraction=retained,
            criterion=criterion,
        )

    @staticmethod
    def pod(
        snapshots: SnapshotSet,
        energy: float = 0.999,
        criterion: PodCriterion = PodCriterion.ENERGY,
    ) -> PodBasis:
        """POD of the hat-ordered states of a snapshot set"""
        if snapshots.count == 0:
            raise InvalidArgumentError("Snapshot set is empty")
        return PodService.pod_matrix(snapshots.states, energy, criterion)

    @staticmethod
    def spectrum_table(pod: PodBasis) -> pd.DataFrame:
        """index, singular value, cumulative energy, retained flag"""
        cumulative = PodService.cumulative_energy(pod.singular_values)
        return pd.DataFrame(
            {
                "index": np.arange(1, len(pod.singular_values) + 1),
                "singular_value": pod.singular_values,
                "cumulative_energy": cumulative,
                "retained": np.arange(len(pod.singular_values)) < pod.n_modes,
            }
        )
