import logging
from typing import List, Optional

import numpy as np
import scipy.linalg as la

logger = logging.getLogger(__name__)

# Singular values below this fraction of the largest are dropped from the least-squares fit
LSTSQ_CUTOFF = 1e-10
# Larger mixing coefficients mean the history no longer describes the map
MAX_COEFFICIENT = 1e4


class AndersonMixer:
    """
    Anderson extrapolation of a fixed-point map x -> g(x)

    Each update combines the last `depth` iterates so that the linearized residual
    g(x) - x is minimized in the least-squares sense. Depth 0 is the plain damped step
    x + damping * (g(x) - x). Combinations are affine, so linear constraints shared by
    every iterate (boundary values, discrete divergence) are preserved.
    """

    def __init__(self, depth: int, damping: float = 1.0, weights: Optional[np.ndarray] = None):
        self.depth = depth
        self.damping = damping
        self.weights = weights
        self.restarts = 0
        self._dx: List[np.ndarray] = []
        self._df: List[np.ndarray] = []
        self._x: Optional[np.ndarray] = None
        self._f: Optional[np.ndarray] = None

    def reset(self) -> None:
        self._dx.clear()
        self._df.clear()
        self._x = None
        self._f = None

    def update(self, x: np.ndarray, g: np.ndarray) -> np.ndarray:
        """Next iterate from the current iterate x and its image g"""
        f = g - x
        plain = x + self.damping * f
        if self.depth == 0:
            return plain

        if self._x is not None:
            self._dx.append(x - self._x)
            self._df.append(f - self._f)
            if len(self._dx) > self.depth:
                self._dx.pop(0)
                self._df.pop(0)
        self._x = x.copy()
        self._f = f.copy()
        if not self._dx:
            return plain

        dx = np.column_stack(self._dx)
        df = np.column_stack(self._df)
        w = self.weights if self.weights is not None else np.ones_like(f)
        try:
            gamma, _, _, _ = la.lstsq(w[:, None] * df, w * f, cond=LSTSQ_CUTOFF)
        except (la.LinAlgError, ValueError):
            gamma = None
        if gamma is None or not np.all(np.isfinite(gamma)) or np.abs(gamma).max() > MAX_COEFFICIENT:
            logger.debug("Anderson history discarded")
            self.restarts += 1
            self.reset()
            self._x = x.copy()
            self._f = f.copy()
            return plain
        return x - dx @ gamma + self.damping * (f - df @ gamma)
