"""Per-point typicality statistics from exact kNN geometry.

Each query embedding is mapped to a 4-vector [P, R, D, C]:

* P -- does the query fall inside any reference point's k-NN ball?
* R -- fraction of reference points inside the query's own k-NN ball.
* D -- how many reference balls contain the query, normalised by k*n.
* C -- is the nearest reference point inside the query's k-NN ball?

All ball-membership tests use strict inequality, so a reference point
whose k-NN radius is exactly zero (a duplicate) admits no query.

Distances are exact Euclidean, computed in double precision in
query-row blocks so memory stays O(block * n).
"""

from __future__ import annotations

import numpy as np

DEFAULT_K = 5
DEFAULT_BLOCK_ROWS = 1024


def _as_matrix(a, name: str) -> np.ndarray:
    a = np.ascontiguousarray(a, dtype=np.float64)
    if a.ndim != 2:
        raise ValueError(f"{name} must be 2-D, got shape {a.shape}")
    if a.shape[0] < 1 or a.shape[1] < 1:
        raise ValueError(f"{name} must have at least one row and one column")
    if not np.isfinite(a).all():
        raise ValueError(f"{name} contains non-finite values")
    return a


def pairwise_distances(a, b, block_rows: int = DEFAULT_BLOCK_ROWS) -> np.ndarray:
    """Exact Euclidean distance matrix between the rows of ``a`` and ``b``.

    Uses the expanded form ||x||^2 + ||y||^2 - 2<x,y> with negative
    round-off clamped to zero before the square root.
    """
    a = _as_matrix(a, "a")
    b = _as_matrix(b, "b")
    if a.shape[1] != b.shape[1]:
        raise ValueError(
            f"dimension mismatch: {a.shape[1]} vs {b.shape[1]} columns"
        )
    out = np.empty((a.shape[0], b.shape[0]), dtype=np.float64)
    b_sq = np.einsum("ij,ij->i", b, b)
    bt = b.T.copy()
    for lo in range(0, a.shape[0], block_rows):
        hi = min(lo + block_rows, a.shape[0])
        blk = a[lo:hi]
        d2 = np.einsum("ij,ij->i", blk, blk)[:, None] + b_sq[None, :]
        d2 -= 2.0 * (blk @ bt)
        np.maximum(d2, 0.0, out=d2)
        out[lo:hi] = np.sqrt(d2)
    return out


def knn_radii(points, k: int, block_rows: int = DEFAULT_BLOCK_ROWS) -> np.ndarray:
    """Distance from each row to its k-th nearest neighbour in the same set.

    The point itself is excluded by index, so coincident points yield a
    radius of zero. Ties are resolved by distance value (the k-th order
    statistic), never by index.
    """
    pts = _as_matrix(points, "points")
    n = pts.shape[0]
    if not 1 <= k <= n - 1:
        raise ValueError(f"k must satisfy 1 <= k <= rows - 1, got k={k}, rows={n}")
    radii = np.empty(n, dtype=np.float64)
    for lo in range(0, n, block_rows):
        hi = min(lo + block_rows, n)
        d = pairwise_distances(pts[lo:hi], pts, block_rows=block_rows)
        d[np.arange(hi - lo), np.arange(lo, hi)] = np.inf
        radii[lo:hi] = np.partition(d, k - 1, axis=1)[:, k - 1]
    return radii


def compute_prdc(
    ref,
    query,
    k: int = DEFAULT_K,
    block_rows: int = DEFAULT_BLOCK_ROWS,
    query_radii: np.ndarray | None = None,
    ref_radii: np.ndarray | None = None,
) -> np.ndarray:
    """Per-query [P, R, D, C] rows against a reference set.

    ``query_radii`` may be supplied when the query-side k-NN radii are
    already known (e.g. a streaming buffer); otherwise they are computed
    from the query set itself. ``ref_radii`` lets a caller reuse the
    reference-side radii across repeated scoring against one reference.
    """
    ref = _as_matrix(ref, "ref")
    query = _as_matrix(query, "query")
    if ref.shape[1] != query.shape[1]:
        raise ValueError(
            f"dimension mismatch: ref has {ref.shape[1]} columns, "
            f"query has {query.shape[1]}"
        )
    n = ref.shape[0]
    m = query.shape[0]
    if not 1 <= k <= n - 1:
        raise ValueError(f"k={k} out of range for reference set of {n} rows")
    if ref_radii is None:
        r_ref = knn_radii(ref, k, block_rows=block_rows)
    else:
        r_ref = np.asarray(ref_radii, dtype=np.float64)
        if r_ref.shape != (n,):
            raise ValueError("ref_radii must have one entry per reference row")
    if query_radii is None:
        if not 1 <= k <= m - 1:
            raise ValueError(f"k={k} out of range for query set of {m} rows")
        r_query = knn_radii(query, k, block_rows=block_rows)
    else:
        r_query = np.asarray(query_radii, dtype=np.float64)
        if r_query.shape != (m,):
            raise ValueError("query_radii must have one entry per query row")

    out = np.empty((m, 4), dtype=np.float64)
    for lo in range(0, m, block_rows):
        hi = min(lo + block_rows, m)
        d = pairwise_distances(query[lo:hi], ref, block_rows=block_rows)
        in_ref_ball = d < r_ref[None, :]
        out[lo:hi, 0] = in_ref_ball.any(axis=1)
        out[lo:hi, 1] = (d < r_query[lo:hi, None]).sum(axis=1) / n
        out[lo:hi, 2] = in_ref_ball.sum(axis=1) / (k * n)
        out[lo:hi, 3] = d.min(axis=1) < r_query[lo:hi]
    return out


def compute_prdc_naive(ref, query, k: int) -> np.ndarray:
    """Direct row-by-row evaluation of the four statistics.

    Independent oracle for :func:`compute_prdc`: distances come from the
    squared coordinate differences directly (no expanded-form shortcut)
    and the k-th radius from a full sort. O(n*m*d), test use only.
    """
    ref = _as_matrix(ref, "ref")
    query = _as_matrix(query, "query")
    n, m = ref.shape[0], query.shape[0]

    def dist_row(x, pts):
        return np.sqrt(((pts - x) ** 2).sum(axis=1))

    def kth_radius(pts, i):
        ds = np.sort(np.delete(dist_row(pts[i], pts), i))
        return ds[k - 1]

    r_ref = np.array([kth_radius(ref, i) for i in range(n)])
    r_query = np.array([kth_radius(query, j) for j in range(m)])
    out = np.zeros((m, 4), dtype=np.float64)
    for j in range(m):
        d = dist_row(query[j], ref)
        inside = d < r_ref
        out[j, 0] = float(inside.any())
        out[j, 1] = (d < r_query[j]).sum() / n
        out[j, 2] = inside.sum() / (k * n)
        out[j, 3] = float(d.min() < r_query[j])
    return out
