"""Gaussian mixture density model fitted by EM, full covariances.

Anomaly score is the negative log-density under the fitted mixture.
"""

from __future__ import annotations

import numpy as np

LOG_2PI = float(np.log(2.0 * np.pi))


def _logsumexp(a: np.ndarray, axis: int) -> np.ndarray:
    m = np.max(a, axis=axis, keepdims=True)
    out = np.log(np.sum(np.exp(a - m), axis=axis)) + np.squeeze(m, axis=axis)
    return out


class GmmDetector:
    """Full-covariance GMM with k-means++-style seeding.

    Covariances get ``reg`` added to their diagonals every M-step, which
    keeps them positive definite on collapsed responsibilities. A
    component whose responsibility mass vanishes is reinitialised from a
    random training point (seeded).
    """

    kind = "gmm"

    def __init__(
        self,
        n_components: int = 1,
        reg: float = 1e-6,
        max_iter: int = 200,
        tol: float = 1e-4,
        seed: int = 0,
    ):
        self.n_components = int(n_components)
        self.reg = float(reg)
        self.max_iter = int(max_iter)
        self.tol = float(tol)
        self.seed = int(seed)
        self.weights: np.ndarray | None = None
        self.means: np.ndarray | None = None
        self.covariances: np.ndarray | None = None
        self.log_likelihood_trace: list[float] = []

    # -- fitting -----------------------------------------------------------

    def _seed_means(self, x: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        n = x.shape[0]
        means = [x[rng.integers(n)]]
        for _ in range(1, self.n_components):
            d2 = np.min(
                ((x[:, None, :] - np.asarray(means)[None, :, :]) ** 2).sum(-1),
                axis=1,
            )
            total = d2.sum()
            if total <= 0:
                means.append(x[rng.integers(n)])
                continue
            means.append(x[rng.choice(n, p=d2 / total)])
        return np.asarray(means)

    def fit(self, train: np.ndarray) -> "GmmDetector":
        x = np.asarray(train, dtype=np.float64)
        if x.ndim != 2 or x.shape[0] < self.n_components:
            raise ValueError("need at least n_components training rows")
        n, d = x.shape
        rng = np.random.default_rng(self.seed)

        self.means = self._seed_means(x, rng)
        base_cov = np.cov(x, rowvar=False)
        base_cov = np.atleast_2d(base_cov) + self.reg * np.eye(d)
        self.covariances = np.repeat(base_cov[None, :, :], self.n_components, axis=0)
        self.weights = np.full(self.n_components, 1.0 / self.n_components)

        self.log_likelihood_trace = []
        prev_ll = -np.inf
        for _ in range(self.max_iter):
            # E-step
            log_prob = self._component_log_density(x)  # (n, C)
            log_joint = log_prob + np.log(self.weights)[None, :]
            log_norm = _logsumexp(log_joint, axis=1)
            resp = np.exp(log_joint - log_norm[:, None])
            ll = float(log_norm.sum())
            self.log_likelihood_trace.append(ll)
            if ll - prev_ll < self.tol and np.isfinite(prev_ll):
                break
            prev_ll = ll
            # M-step
            nk = resp.sum(axis=0)
            for c in range(self.n_components):
                if nk[c] < 1e-10 * n:
                    # responsibility collapse: reseed this component
                    self.means[c] = x[rng.integers(n)]
                    self.covariances[c] = base_cov.copy()
                    nk[c] = 1.0
                    resp[:, c] = 1.0 / n
                    continue
                mu = resp[:, c] @ x / nk[c]
                diff = x - mu
                cov = (resp[:, c][:, None] * diff).T @ diff / nk[c]
                self.means[c] = mu
                self.covariances[c] = cov + self.reg * np.eye(d)
            self.weights = nk / nk.sum()
        return self

    def _component_log_density(self, x: np.ndarray) -> np.ndarray:
        n, d = x.shape
        out = np.empty((n, self.n_components))
        for c in range(self.n_components):
            chol = np.linalg.cholesky(self.covariances[c])
            diff = x - self.means[c]
            # solve L z = diff^T -> mahalanobis = ||z||^2
            z = np.linalg.solve(chol, diff.T)
            maha = np.einsum("ij,ij->j", z, z)
            log_det = 2.0 * np.log(np.diag(chol)).sum()
            out[:, c] = -0.5 * (d * LOG_2PI + log_det + maha)
        return out

    # -- scoring -----------------------------------------------------------

    def score(self, x: np.ndarray) -> np.ndarray:
        """Negative log-density; higher = more anomalous."""
        x = np.atleast_2d(np.asarray(x, dtype=np.float64))
        if x.shape[1] != self.means.shape[1]:
            raise ValueError("dimension mismatch")
        log_joint = self._component_log_density(x) + np.log(self.weights)[None, :]
        return -_logsumexp(log_joint, axis=1)

    # -- serialization payload --------------------------------------------

    def state(self) -> dict:
        return {
            "n_components": self.n_components,
            "reg": self.reg,
            "weights": self.weights,
            "means": self.means,
            "covariances": self.covariances,
        }

    @classmethod
    def from_state(cls, st: dict) -> "GmmDetector":
        m = cls(n_components=int(st["n_components"]), reg=float(st["reg"]))
        m.weights = st["weights"]
        m.means = st["means"]
        m.covariances = st["covariances"]
        return m
