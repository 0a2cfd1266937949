"""Soft-boundary hypersphere detector with a quantile radius update.

A small fully-connected network (default 4 -> 32 -> 16 -> 8, batch
normalisation, tanh, dropout) maps features to a latent space. The
hypersphere centre is the mean latent of an initial forward pass and is
never touched by gradients. Training minimises

    R^2 + (1 / (nu * B)) * sum max(0, ||phi(x) - c||^2 - R^2)

over the network parameters only; after every epoch the radius is reset
to the nearest-rank (1 - nu) quantile of the squared training distances.
Scores are squared latent distances from the centre in evaluation mode
(dropout off, frozen normalisation statistics).

Implemented directly in numpy with hand-written backprop and a
first-order adaptive-moment (Adam) update, so the whole fit is
bit-reproducible under a fixed seed.
"""

from __future__ import annotations

import numpy as np

BN_EPS = 1e-5
BN_MOMENTUM = 0.1
CENTER_NUDGE = 0.1


def nearest_rank_quantile(values: np.ndarray, q: float) -> float:
    """ceil(q * n)-th smallest value (nearest-rank convention)."""
    v = np.sort(np.asarray(values, dtype=np.float64))
    n = v.size
    if n == 0:
        raise ValueError("empty input")
    rank = max(1, int(np.ceil(q * n)))
    return float(v[min(rank, n) - 1])


class _Adam:
    def __init__(self, shapes, lr: float):
        self.lr = lr
        self.b1, self.b2, self.eps = 0.9, 0.999, 1e-8
        self.m = [np.zeros(s) for s in shapes]
        self.v = [np.zeros(s) for s in shapes]
        self.t = 0

    def step(self, params, grads):
        self.t += 1
        b1t = 1.0 - self.b1**self.t
        b2t = 1.0 - self.b2**self.t
        for p, g, m, v in zip(params, grads, self.m, self.v):
            m *= self.b1
            m += (1.0 - self.b1) * g
            v *= self.b2
            v += (1.0 - self.b2) * g * g
            p -= self.lr * (m / b1t) / (np.sqrt(v / b2t) + self.eps)


class DeepSvddDetector:
    kind = "deepsvdd"

    def __init__(
        self,
        widths: tuple[int, ...] = (4, 32, 16, 8),
        dropout_p: float = 0.1,
        nu: float = 0.1,
        epochs: int = 100,
        lr: float = 1e-3,
        batch: int = 256,
        seed: int = 0,
    ):
        if not 0.0 < nu < 1.0:
            raise ValueError("nu must be in (0, 1)")
        self.widths = tuple(int(w) for w in widths)
        self.dropout_p = float(dropout_p)
        self.nu = float(nu)
        self.epochs = int(epochs)
        self.lr = float(lr)
        self.batch = int(batch)
        self.seed = int(seed)
        self.center: np.ndarray | None = None
        self.radius: float | None = None
        # parameters per layer: W, b; hidden layers add bn gamma/beta +
        # running mean/var
        self._params: list[np.ndarray] = []
        self._bn_running: list[tuple[np.ndarray, np.ndarray]] = []

    # -- network -----------------------------------------------------------

    def _init_params(self, rng: np.random.Generator) -> None:
        self._params = []
        self._bn_running = []
        for i in range(len(self.widths) - 1):
            fan_in, fan_out = self.widths[i], self.widths[i + 1]
            limit = np.sqrt(6.0 / (fan_in + fan_out))
            w = rng.uniform(-limit, limit, size=(fan_in, fan_out))
            b = np.zeros(fan_out)
            self._params += [w, b]
            if i < len(self.widths) - 2:  # hidden layer: batch norm affine
                self._params += [np.ones(fan_out), np.zeros(fan_out)]
                self._bn_running.append((np.zeros(fan_out), np.ones(fan_out)))

    def _forward(self, x, training: bool, rng=None, capture=None):
        """Forward pass; ``capture`` collects intermediates for backprop."""
        h = x
        p = 0
        bn_idx = 0
        n_layers = len(self.widths) - 1
        for i in range(n_layers):
            w, b = self._params[p], self._params[p + 1]
            z = h @ w + b
            if i < n_layers - 1:
                gamma, beta = self._params[p + 2], self._params[p + 3]
                run_mean, run_var = self._bn_running[bn_idx]
                if training:
                    mu = z.mean(axis=0)
                    var = z.var(axis=0)
                    run_mean *= 1.0 - BN_MOMENTUM
                    run_mean += BN_MOMENTUM * mu
                    run_var *= 1.0 - BN_MOMENTUM
                    run_var += BN_MOMENTUM * var
                else:
                    mu, var = run_mean, run_var
                inv_std = 1.0 / np.sqrt(var + BN_EPS)
                zhat = (z - mu) * inv_std
                a = np.tanh(gamma * zhat + beta)
                if training and self.dropout_p > 0.0:
                    mask = (rng.random(a.shape) >= self.dropout_p) / (
                        1.0 - self.dropout_p
                    )
                    out = a * mask
                else:
                    mask = None
                    out = a
                if capture is not None:
                    capture.append((h, z, zhat, inv_std, a, mask))
                h = out
                p += 4
                bn_idx += 1
            else:
                if capture is not None:
                    capture.append((h,))
                h = z
                p += 2
        return h

    def _backward(self, d_out, capture):
        """Gradients for all parameters given dL/d(latent)."""
        grads = [None] * len(self._params)
        n_layers = len(self.widths) - 1
        p = len(self._params)
        g = d_out
        for i in reversed(range(n_layers)):
            if i == n_layers - 1:
                (h,) = capture[i]
                p -= 2
                grads[p] = h.T @ g
                grads[p + 1] = g.sum(axis=0)
                g = g @ self._params[p].T
            else:
                h, z, zhat, inv_std, a, mask = capture[i]
                p -= 4
                w, b, gamma, beta = self._params[p : p + 4]
                if mask is not None:
                    g = g * mask
                g = g * (1.0 - a * a)  # through tanh
                grads[p + 2] = (g * zhat).sum(axis=0)
                grads[p + 3] = g.sum(axis=0)
                # through batch norm (batch statistics)
                m = z.shape[0]
                gz = g * gamma
                dzhat_sum = gz.sum(axis=0)
                dzhat_dot = (gz * zhat).sum(axis=0)
                g = (inv_std / m) * (m * gz - dzhat_sum - zhat * dzhat_dot)
                grads[p] = h.T @ g
                grads[p + 1] = g.sum(axis=0)
                g = g @ w.T
        return grads

    # -- fitting -----------------------------------------------------------

    def fit(self, train: np.ndarray) -> "DeepSvddDetector":
        x = np.asarray(train, dtype=np.float64)
        if x.ndim != 2 or x.shape[1] != self.widths[0]:
            raise ValueError(f"expected 2-D input with {self.widths[0]} columns")
        n = x.shape[0]
        batch = min(self.batch, n)
        rng = np.random.default_rng(self.seed)
        self._init_params(rng)

        # centre: mean latent of a full training-mode pass (this also
        # seeds the running normalisation statistics); zero components
        # are nudged away from the trivial solution
        latent = self._forward(x, training=True, rng=rng)
        c = latent.mean(axis=0)
        small = np.abs(c) < CENTER_NUDGE
        c[small] = np.where(c[small] >= 0, CENTER_NUDGE, -CENTER_NUDGE)
        self.center = c

        d2 = ((self._forward(x, training=False) - c) ** 2).sum(axis=1)
        r2 = nearest_rank_quantile(d2, 1.0 - self.nu)

        opt = _Adam([p.shape for p in self._params], self.lr)
        for _ in range(self.epochs):
            order = rng.permutation(n)
            for lo in range(0, n, batch):
                idx = order[lo : lo + batch]
                capture: list = []
                z = self._forward(x[idx], training=True, rng=rng, capture=capture)
                diff = z - c
                dist2 = (diff * diff).sum(axis=1)
                viol = dist2 > r2
                loss = r2 + np.maximum(0.0, dist2 - r2).sum() / (self.nu * idx.size)
                if not np.isfinite(loss):
                    raise RuntimeError(
                        f"DeepSVDD loss became non-finite (r2={r2}, "
                        f"batch={idx.size}); aborting fit"
                    )
                d_out = np.where(viol[:, None], 2.0 * diff, 0.0) / (
                    self.nu * idx.size
                )
                grads = self._backward(d_out, capture)
                opt.step(self._params, grads)
            d2 = ((self._forward(x, training=False) - c) ** 2).sum(axis=1)
            r2 = nearest_rank_quantile(d2, 1.0 - self.nu)
        self.radius = float(np.sqrt(r2))
        return self

    # -- scoring -----------------------------------------------------------

    def score(self, x: np.ndarray) -> np.ndarray:
        """Squared latent distance from the frozen centre."""
        x = np.atleast_2d(np.asarray(x, dtype=np.float64))
        if x.shape[1] != self.widths[0]:
            raise ValueError("dimension mismatch")
        z = self._forward(x, training=False)
        diff = z - self.center
        return (diff * diff).sum(axis=1)

    def state(self) -> dict:
        flat = {f"param_{i}": p for i, p in enumerate(self._params)}
        for i, (rm, rv) in enumerate(self._bn_running):
            flat[f"bn_mean_{i}"] = rm
            flat[f"bn_var_{i}"] = rv
        flat.update(
            {
                "widths": np.asarray(self.widths, dtype=np.float64),
                "nu": self.nu,
                "center": self.center,
                "radius": float(self.radius),
                "n_params": len(self._params),
            }
        )
        return flat

    @classmethod
    def from_state(cls, st: dict) -> "DeepSvddDetector":
        widths = tuple(int(w) for w in np.asarray(st["widths"]).ravel())
        m = cls(widths=widths, nu=float(st["nu"]))
        m.center = np.asarray(st["center"], dtype=np.float64)
        m.radius = float(st["radius"])
        n_params = int(st["n_params"])
        m._params = [
            np.asarray(st[f"param_{i}"], dtype=np.float64) for i in range(n_params)
        ]
        m._bn_running = []
        i = 0
        while f"bn_mean_{i}" in st:
            m._bn_running.append(
                (
                    np.asarray(st[f"bn_mean_{i}"], dtype=np.float64),
                    np.asarray(st[f"bn_var_{i}"], dtype=np.float64),
                )
            )
            i += 1
        return m
