"""Detection metrics and diagnostic exports.

Scores follow the convention "higher = more anomalous" and labels are
binary with 1 = anomalous. Ranking ties count as 0.5 concordant pairs
(Mann-Whitney); the precision-recall area uses right-step summation
(average-precision style), never trapezoids.
"""

from __future__ import annotations

import csv
import json
import os
from dataclasses import dataclass, asdict

import numpy as np


class UndefinedMetricError(ValueError):
    """Raised when the label set cannot support the requested metric."""


def _check(scores, labels, need_pos=True, need_neg=False):
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels)
    if scores.shape != labels.shape or scores.ndim != 1:
        raise ValueError("scores and labels must be 1-D arrays of equal length")
    if scores.size == 0:
        raise ValueError("empty input")
    pos = int((labels == 1).sum())
    neg = int(labels.size - pos)
    if need_pos and pos == 0:
        raise UndefinedMetricError("no positive labels")
    if need_neg and neg == 0:
        raise UndefinedMetricError("no negative labels")
    return scores, labels.astype(np.int64), pos, neg


def auroc(scores, labels) -> float:
    """Probability a random anomalous score exceeds a random normal one.

    Rank-based Mann-Whitney computation: ties contribute 0.5. Equals the
    all-pairs count (concordant + 0.5 * tied) / (P * N) exactly.
    """
    scores, labels, pos, neg = _check(scores, labels, need_pos=True, need_neg=True)
    order = np.argsort(scores, kind="mergesort")
    s = scores[order]
    # average ranks over tied groups (1-based)
    ranks = np.empty(s.size, dtype=np.float64)
    i = 0
    while i < s.size:
        j = i
        while j + 1 < s.size and s[j + 1] == s[i]:
            j += 1
        ranks[i : j + 1] = 0.5 * (i + j) + 1.0
        i = j + 1
    rank_sum = ranks[labels[order] == 1].sum()
    u = rank_sum - pos * (pos + 1) / 2.0
    return float(u / (pos * neg))


def _sweep(scores, labels):
    """Cumulative TP/FP at each distinct threshold, descending.

    Returns (thresholds, tp, fp) where row t means "predict positive when
    score >= thresholds[t]"; tied scores are grouped into one point.
    """
    order = np.argsort(-scores, kind="mergesort")
    s = scores[order]
    y = labels[order]
    distinct = np.nonzero(np.r_[np.diff(s) != 0, True])[0]
    tp = np.cumsum(y)[distinct].astype(np.float64)
    fp = (distinct + 1) - tp
    return s[distinct], tp, fp


def auprc(scores, labels) -> float:
    """Area under the precision-recall curve, right-step summation."""
    scores, labels, pos, _ = _check(scores, labels, need_pos=True)
    _, tp, fp = _sweep(scores, labels)
    precision = tp / (tp + fp)
    recall = tp / pos
    drecall = np.diff(np.r_[0.0, recall])
    return float((drecall * precision).sum())


def fpr_at_tpr(scores, labels, tpr_target: float = 0.95) -> float:
    """Smallest false-positive rate among thresholds reaching the TPR target."""
    scores, labels, pos, neg = _check(scores, labels, need_pos=True, need_neg=True)
    _, tp, fp = _sweep(scores, labels)
    ok = (tp / pos) >= tpr_target
    if not ok.any():
        return 1.0
    return float((fp[ok] / neg).min())


@dataclass
class BestF1:
    f1: float
    precision: float
    recall: float
    threshold: float
    tp: int
    fp: int
    tn: int
    fn: int


def best_f1(scores, labels) -> BestF1:
    """F1-maximising operating point over all distinct score thresholds.

    Predicts positive when score >= threshold. Ties on F1 are broken
    toward higher precision, then higher threshold.
    """
    scores, labels, pos, neg = _check(scores, labels, need_pos=True)
    thresholds, tp, fp = _sweep(scores, labels)
    fn = pos - tp
    precision = tp / (tp + fp)
    recall = tp / pos
    f1 = np.where(tp > 0, 2 * tp / (2 * tp + fp + fn), 0.0)
    # lexicographic argmax: f1, then precision, then threshold (descending
    # sweep order, so earlier index = higher threshold)
    best = 0
    for i in range(1, f1.size):
        key = (f1[i], precision[i])
        best_key = (f1[best], precision[best])
        if key > best_key:
            best = i
    return BestF1(
        f1=float(f1[best]),
        precision=float(precision[best]),
        recall=float(recall[best]),
        threshold=float(thresholds[best]),
        tp=int(tp[best]),
        fp=int(fp[best]),
        tn=int(neg - fp[best]),
        fn=int(fn[best]),
    )


@dataclass
class EvalResult:
    """Full metric suite for one scored test set."""

    auroc: float
    auprc: float
    fpr_at_95tpr: float
    f1: float
    precision: float
    recall: float
    threshold: float
    tp: int
    fp: int
    tn: int
    fn: int

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True)


def evaluate(scores, labels, tpr_target: float = 0.95) -> EvalResult:
    bf = best_f1(scores, labels)
    return EvalResult(
        auroc=auroc(scores, labels),
        auprc=auprc(scores, labels),
        fpr_at_95tpr=fpr_at_tpr(scores, labels, tpr_target),
        f1=bf.f1,
        precision=bf.precision,
        recall=bf.recall,
        threshold=bf.threshold,
        tp=bf.tp,
        fp=bf.fp,
        tn=bf.tn,
        fn=bf.fn,
    )


def density_buckets(max_count: int) -> list[tuple[int, int]]:
    """Power-of-two anomaly-count buckets [1,1], [2,3], [4,7], ..."""
    buckets = []
    lo = 1
    while lo <= max_count:
        hi = lo * 2 - 1
        buckets.append((lo, hi))
        lo *= 2
    return buckets


def density_recall(anomaly_counts, detected, edges=None):
    """Per-bucket recall over anomalous windows grouped by anomaly density.

    ``anomaly_counts``: anomalous-line count per anomalous window (>= 1).
    ``detected``: boolean per window, whether it was flagged.
    Returns rows of (bucket_lo, bucket_hi, windows, detected, recall).
    """
    counts = np.asarray(anomaly_counts, dtype=np.int64)
    det = np.asarray(detected, dtype=bool)
    if counts.shape != det.shape:
        raise ValueError("anomaly_counts and detected must align")
    if counts.size == 0:
        return []
    if (counts < 1).any():
        raise ValueError("anomaly_counts must be >= 1 for anomalous windows")
    buckets = edges if edges is not None else density_buckets(int(counts.max()))
    rows = []
    for lo, hi in buckets:
        mask = (counts >= lo) & (counts <= hi)
        n = int(mask.sum())
        if n == 0:
            continue
        d = int(det[mask].sum())
        rows.append((lo, hi, n, d, d / n))
    return rows


def _fmt(x: float) -> str:
    return repr(float(x))


def export_diagnostics(
    scores,
    labels,
    out_dir: str,
    anomaly_counts=None,
    detected=None,
    n_bins: int = 50,
) -> list[str]:
    """Write ROC points, score histogram, and density-recall CSVs.

    Deterministic byte output for identical inputs. Returns written paths.
    """
    scores, labels, pos, neg = _check(scores, labels, need_pos=True, need_neg=True)
    os.makedirs(out_dir, exist_ok=True)
    written = []

    roc_path = os.path.join(out_dir, "roc_points.csv")
    thresholds, tp, fp = _sweep(scores, labels)
    with open(roc_path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["fpr", "tpr", "threshold"])
        w.writerow(["0.0", "0.0", "inf"])
        for t, tpi, fpi in zip(thresholds, tp, fp):
            w.writerow([_fmt(fpi / neg), _fmt(tpi / pos), _fmt(t)])
    written.append(roc_path)

    hist_path = os.path.join(out_dir, "score_hist.csv")
    lo, hi = float(scores.min()), float(scores.max())
    if hi == lo:
        hi = lo + 1.0
    edges = np.linspace(lo, hi, n_bins + 1)
    h_norm, _ = np.histogram(scores[labels == 0], bins=edges)
    h_anom, _ = np.histogram(scores[labels == 1], bins=edges)
    with open(hist_path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["bin_lo", "bin_hi", "normal_count", "anomalous_count"])
        for i in range(n_bins):
            w.writerow([_fmt(edges[i]), _fmt(edges[i + 1]), int(h_norm[i]), int(h_anom[i])])
    written.append(hist_path)

    if anomaly_counts is not None and detected is not None:
        dr_path = os.path.join(out_dir, "density_recall.csv")
        with open(dr_path, "w", newline="") as f:
            w = csv.writer(f)
            w.writerow(["bucket_lo", "bucket_hi", "windows", "detected", "recall"])
            for lo_b, hi_b, n, d, r in density_recall(anomaly_counts, detected):
                w.writerow([lo_b, hi_b, n, d, _fmt(r)])
        written.append(dr_path)
    return written
