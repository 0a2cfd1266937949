"""Gaussian kernel density scorer with Scott's-rule bandwidth."""

from __future__ import annotations

import numpy as np

BANDWIDTH_FLOOR = 1e-6
LOG_2PI = float(np.log(2.0 * np.pi))


def scott_bandwidth(x: np.ndarray) -> float:
    """n^(-1/(d+4)) times the pooled per-dimension std.

    Pooled std is the root mean of per-column variances; a degenerate
    (zero-variance) training set floors the bandwidth at 1e-6.
    """
    n, d = x.shape
    pooled = float(np.sqrt(x.var(axis=0).mean()))
    h = n ** (-1.0 / (d + 4)) * pooled
    return max(h, BANDWIDTH_FLOOR)


class KdeDetector:
    """Product-Gaussian KDE; anomaly score is negative log-density."""

    kind = "kde"

    def __init__(self, bandwidth: float | None = None):
        self.bandwidth = bandwidth  # None -> Scott's rule at fit time
        self.train_points: np.ndarray | None = None
        self._train_sq: np.ndarray | None = None

    def fit(self, train: np.ndarray) -> "KdeDetector":
        x = np.asarray(train, dtype=np.float64)
        if x.ndim != 2 or x.shape[0] < 2:
            raise ValueError("KDE needs >= 2 training rows")
        self.train_points = np.ascontiguousarray(x)
        if self.bandwidth is None:
            self.bandwidth = scott_bandwidth(x)
        elif self.bandwidth <= 0:
            raise ValueError("bandwidth must be positive")
        self._prepare()
        return self

    def _prepare(self) -> None:
        self._train_sq = np.einsum("ij,ij->i", self.train_points, self.train_points)
        n, d = self.train_points.shape
        h = float(self.bandwidth)
        self._log_norm = -np.log(n) - 0.5 * d * LOG_2PI - d * np.log(h)
        self._inv_2h2 = 0.5 / (h * h)
        self._train_t2 = np.ascontiguousarray(self.train_points.T) * -2.0

    def score(self, x: np.ndarray) -> np.ndarray:
        """-log density via a numerically safe log-sum-exp over kernels."""
        x = np.atleast_2d(np.asarray(x, dtype=np.float64))
        n, d = self.train_points.shape
        if x.shape[1] != d:
            raise ValueError("dimension mismatch")
        out = np.empty(x.shape[0], dtype=np.float64)
        for i, q in enumerate(x):
            d2 = self._train_sq + q @ self._train_t2 + float(q @ q)
            e = d2 * (-self._inv_2h2)
            m = e.max()
            lse = m + np.log(np.exp(e - m).sum())
            out[i] = -(self._log_norm + lse)
        return out

    def state(self) -> dict:
        return {"bandwidth": float(self.bandwidth), "train_points": self.train_points}

    @classmethod
    def from_state(cls, st: dict) -> "KdeDetector":
        m = cls(bandwidth=float(st["bandwidth"]))
        m.train_points = np.ascontiguousarray(st["train_points"], dtype=np.float64)
        m._prepare()
        return m
