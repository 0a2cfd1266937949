"""One-class SVM trained by a two-variable (SMO) dual solver.

Dual problem:  min 1/2 a^T Q a  s.t.  sum a = 1,  0 <= a_i <= 1/(nu*n),
with Q the RBF kernel matrix. Pairs are chosen by maximal violation and
the gradient Q a is maintained incrementally; kernel columns are
computed on demand and cached, so the full kernel matrix is never
materialised.

Anomaly score is rho - sum_i a_i k(x_i, x), the negated decision value.
"""

from __future__ import annotations

import numpy as np


class OcsvmDetector:
    kind = "ocsvm"

    def __init__(
        self,
        nu: float = 0.1,
        gamma: float | None = None,
        tol: float = 1e-4,
        max_iter: int = 100_000,
        cache_columns: int = 1024,
    ):
        if not 0.0 < nu <= 1.0:
            raise ValueError("nu must be in (0, 1]")
        self.nu = float(nu)
        self.gamma = gamma  # None -> 1 / (d * mean feature variance)
        self.tol = float(tol)
        self.max_iter = int(max_iter)
        self.cache_columns = int(cache_columns)
        self.converged: bool | None = None
        self.n_iter: int | None = None
        self.support_vectors: np.ndarray | None = None
        self.alphas: np.ndarray | None = None
        self.rho: float | None = None

    # -- kernel helpers ----------------------------------------------------

    def _kernel_cols(self, x: np.ndarray, x_sq: np.ndarray, idx: int) -> np.ndarray:
        d2 = x_sq + x_sq[idx] - 2.0 * (x @ x[idx])
        np.maximum(d2, 0.0, out=d2)
        return np.exp(-self.gamma * d2)

    def _kernel_matrix(self, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        a_sq = np.einsum("ij,ij->i", a, a)
        b_sq = np.einsum("ij,ij->i", b, b)
        d2 = a_sq[:, None] + b_sq[None, :] - 2.0 * (a @ b.T)
        np.maximum(d2, 0.0, out=d2)
        return np.exp(-self.gamma * d2)

    # -- fitting -----------------------------------------------------------

    def fit(self, train: np.ndarray) -> "OcsvmDetector":
        x = np.ascontiguousarray(train, dtype=np.float64)
        if x.ndim != 2 or x.shape[0] < 2:
            raise ValueError("OCSVM needs >= 2 training rows")
        n, d = x.shape
        if self.gamma is None:
            mean_var = float(x.var(axis=0).mean())
            self.gamma = 1.0 / (d * mean_var) if mean_var > 0 else 1.0
        x_sq = np.einsum("ij,ij->i", x, x)
        c = 1.0 / (self.nu * n)

        # feasible start: first floor(nu*n) points at the box, remainder
        # fractional on the next point so that sum alpha = 1
        alpha = np.zeros(n)
        full = int(self.nu * n)
        alpha[:full] = c
        if full < n:
            alpha[full] = 1.0 - full * c

        cache: dict[int, np.ndarray] = {}

        def col(i: int) -> np.ndarray:
            k = cache.get(i)
            if k is None:
                k = self._kernel_cols(x, x_sq, i)
                if len(cache) >= self.cache_columns:
                    cache.pop(next(iter(cache)))
                cache[i] = k
            return k

        # initial gradient g = Q alpha over the active points
        g = np.zeros(n)
        active = np.nonzero(alpha > 0)[0]
        for lo in range(0, active.size, 256):
            blk = active[lo : lo + 256]
            g += self._kernel_matrix(x, x[blk]) @ alpha[blk]

        eps = 1e-12
        self.converged = False
        it = 0
        for it in range(1, self.max_iter + 1):
            up_mask = alpha < c - eps
            low_mask = alpha > eps
            i_up = int(np.argmin(np.where(up_mask, g, np.inf)))
            i_low = int(np.argmax(np.where(low_mask, g, -np.inf)))
            violation = g[i_low] - g[i_up]
            if violation < self.tol:
                self.converged = True
                break
            k_up = col(i_up)
            k_low = col(i_low)
            eta = k_up[i_up] + k_low[i_low] - 2.0 * k_up[i_low]
            if eta <= eps:
                eta = eps
            delta = min(violation / eta, c - alpha[i_up], alpha[i_low])
            alpha[i_up] += delta
            alpha[i_low] -= delta
            g += delta * (k_up - k_low)
        self.n_iter = it

        sv_mask = alpha > eps
        self.support_vectors = x[sv_mask].copy()
        self.alphas = alpha[sv_mask].copy()
        # rho from free support vectors (decision value zero there)
        free = sv_mask & (alpha < c - eps)
        if free.any():
            self.rho = float(g[free].mean())
        else:
            self.rho = float(0.5 * (g[i_up] + g[i_low]))
        self._dual_gradient = g  # kept for diagnostics/tests
        return self

    # -- scoring -----------------------------------------------------------

    def decision_function(self, x: np.ndarray) -> np.ndarray:
        """Positive inside the learned region, negative outside."""
        x = np.atleast_2d(np.asarray(x, dtype=np.float64))
        k = self._kernel_matrix(x, self.support_vectors)
        return k @ self.alphas - self.rho

    def score(self, x: np.ndarray) -> np.ndarray:
        return -self.decision_function(x)

    def state(self) -> dict:
        return {
            "nu": self.nu,
            "gamma": float(self.gamma),
            "rho": float(self.rho),
            "converged": bool(self.converged),
            "support_vectors": self.support_vectors,
            "alphas": self.alphas,
        }

    @classmethod
    def from_state(cls, st: dict) -> "OcsvmDetector":
        m = cls(nu=float(st["nu"]), gamma=float(st["gamma"]))
        m.rho = float(st["rho"])
        m.converged = bool(st["converged"])
        m.support_vectors = np.ascontiguousarray(st["support_vectors"])
        m.alphas = np.ascontiguousarray(st["alphas"])
        return m
