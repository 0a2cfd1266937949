"""Z-score feature conditioning for scale-sensitive detectors."""

from __future__ import annotations

import numpy as np

STD_FLOOR = 1e-8


class Standardizer:
    """Column-wise z-scoring with a floored population std.

    Constant columns map to zero through the floor; apply-then-invert
    recovers inputs to within 1e-9.
    """

    def __init__(self, mean: np.ndarray, std: np.ndarray):
        self.mean = np.asarray(mean, dtype=np.float64)
        self.std = np.asarray(std, dtype=np.float64)

    @classmethod
    def fit(cls, train: np.ndarray) -> "Standardizer":
        x = np.asarray(train, dtype=np.float64)
        if x.ndim != 2 or x.shape[0] < 2:
            raise ValueError("standardizer needs a 2-D input with >= 2 rows")
        mean = x.mean(axis=0)
        std = np.maximum(x.std(axis=0), STD_FLOOR)
        return cls(mean, std)

    def apply(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        return (x - self.mean) / self.std

    def invert(self, z: np.ndarray) -> np.ndarray:
        z = np.asarray(z, dtype=np.float64)
        return z * self.std + self.mean
