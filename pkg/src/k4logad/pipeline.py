"""Training and scoring orchestration over typicality features.

Training splits the normal embeddings into a reference half and a query
half (seeded shuffle, ceil(n/2) rows to the reference), converts the
query half to [P, R, D, C] rows against the reference, and fits the
chosen detector on those rows. Scoring reuses the captured reference
set, so test features live in exactly the geometry the detector was
trained in.
"""

from __future__ import annotations

import hashlib
import json
import math
import os
from dataclasses import dataclass, field

import numpy as np

from . import prdc
from .detectors import (
    Standardizer,
    STANDARDIZED_KINDS,
    make_detector,
    save_model,
    load_model,
)
from .embedding import write_k4em, read_k4em


@dataclass
class TrainedPipeline:
    """Immutable reference set + fitted detector + optional threshold."""

    reference: np.ndarray
    k: int
    detector: object
    detector_kind: str
    standardizer: Standardizer | None
    seed: int
    threshold: float | None = None
    config: dict = field(default_factory=dict)
    #: (standardized) training feature rows; kept in memory for threshold
    #: selection, not part of the serialized bundle
    train_features: np.ndarray | None = field(default=None, repr=False, compare=False)
    _ref_radii: np.ndarray | None = field(default=None, repr=False, compare=False)

    @property
    def provenance(self) -> str:
        h = hashlib.sha256()
        h.update(np.ascontiguousarray(self.reference, dtype="<f8").tobytes())
        h.update(
            json.dumps(
                {"k": self.k, "detector": self.detector_kind, "seed": self.seed},
                sort_keys=True,
            ).encode()
        )
        return h.hexdigest()

    def features(self, embeddings: np.ndarray, query_radii=None) -> np.ndarray:
        if self._ref_radii is None:
            # reference radii are fixed once the reference is captured
            object.__setattr__(
                self, "_ref_radii", prdc.knn_radii(self.reference, self.k)
            )
        r = prdc.compute_prdc(
            self.reference,
            embeddings,
            self.k,
            query_radii=query_radii,
            ref_radii=self._ref_radii,
        )
        if self.standardizer is not None:
            r = self.standardizer.apply(r)
        return r

    def score(self, embeddings: np.ndarray, query_radii=None) -> np.ndarray:
        """Anomaly scores for a test batch; needs >= k+1 rows unless the
        query-side radii are supplied externally (streaming buffer)."""
        embeddings = np.asarray(embeddings, dtype=np.float64)
        if embeddings.ndim != 2 or embeddings.shape[1] != self.reference.shape[1]:
            raise ValueError("dimension mismatch with reference embeddings")
        if query_radii is None and embeddings.shape[0] < self.k + 1:
            raise ValueError(
                f"batch of {embeddings.shape[0]} rows cannot supply k={self.k} "
                "query-side neighbours; accumulate at least k+1 rows"
            )
        return self.detector.score(self.features(embeddings, query_radii))

    def classify(self, scores: np.ndarray) -> np.ndarray:
        if self.threshold is None:
            raise ValueError("no threshold set; call select_threshold first")
        return classify(scores, self.threshold)


def train(
    embeddings_train: np.ndarray,
    k: int = prdc.DEFAULT_K,
    detector: str = "deepsvdd",
    detector_cfg: dict | None = None,
    seed: int = 0,
) -> TrainedPipeline:
    """Fit the full path: split, featurize, optionally standardize, fit."""
    e = np.asarray(embeddings_train, dtype=np.float64)
    if e.ndim != 2:
        raise ValueError("training embeddings must be 2-D")
    n = e.shape[0]
    if n < 2 * (k + 1):
        raise ValueError(
            f"need at least 2*(k+1)={2 * (k + 1)} training rows for k={k}, got {n}"
        )
    rng = np.random.default_rng(seed)
    order = rng.permutation(n)
    n_ref = math.ceil(n / 2)
    ref = np.ascontiguousarray(e[order[:n_ref]])
    qry = np.ascontiguousarray(e[order[n_ref:]])

    r_train = prdc.compute_prdc(ref, qry, k)
    standardizer = None
    if detector in STANDARDIZED_KINDS:
        standardizer = Standardizer.fit(r_train)
        r_train = standardizer.apply(r_train)
    cfg = dict(detector_cfg or {})
    if detector in ("gmm", "deepsvdd"):
        cfg.setdefault("seed", seed)
    model = make_detector(detector, **cfg)
    model.fit(r_train)
    return TrainedPipeline(
        reference=ref,
        k=k,
        detector=model,
        detector_kind=detector,
        standardizer=standardizer,
        seed=seed,
        config={"detector_cfg": {k_: v for k_, v in cfg.items()}},
        train_features=r_train,
    )


def select_threshold(train_scores, percentile: float = 95.0) -> float:
    """Nearest-rank percentile of the training score distribution."""
    s = np.sort(np.asarray(train_scores, dtype=np.float64))
    if s.size == 0:
        raise ValueError("empty score vector")
    if not 0.0 < percentile < 100.0:
        raise ValueError("percentile must be in (0, 100)")
    rank = max(1, int(np.ceil(percentile / 100.0 * s.size)))
    return float(s[rank - 1])


def classify(scores, threshold: float) -> np.ndarray:
    """1 iff the score strictly exceeds the threshold."""
    if not np.isfinite(threshold):
        raise ValueError("threshold must be finite")
    return (np.asarray(scores, dtype=np.float64) > threshold).astype(np.int64)


class StreamingScorer:
    """Buffers incoming embeddings until k+1 are available, then scores
    each full batch with query-side radii from the buffered batch."""

    def __init__(self, pipeline: TrainedPipeline, batch_size: int | None = None):
        self.pipeline = pipeline
        self.batch_size = batch_size or (pipeline.k + 1)
        if self.batch_size < pipeline.k + 1:
            raise ValueError("batch_size must be at least k+1")
        self._buf: list[np.ndarray] = []

    def push(self, embedding: np.ndarray) -> np.ndarray | None:
        """Add one embedding; returns scores when a batch completes."""
        self._buf.append(np.asarray(embedding, dtype=np.float64).ravel())
        if len(self._buf) < self.batch_size:
            return None
        batch = np.vstack(self._buf)
        self._buf = []
        return self.pipeline.score(batch)


# -- bundle serialization ---------------------------------------------------

BUNDLE_MODEL = "detector.k4dm"
BUNDLE_REFERENCE = "reference.k4em"
BUNDLE_CONFIG = "config.json"
BUNDLE_PROVENANCE = "provenance.sha256"


def save_bundle(p: TrainedPipeline, out_dir: str) -> None:
    os.makedirs(out_dir, exist_ok=True)
    save_model(p.detector, os.path.join(out_dir, BUNDLE_MODEL))
    ids = [(0, i) for i in range(p.reference.shape[0])]
    write_k4em(os.path.join(out_dir, BUNDLE_REFERENCE), p.reference, ids)
    cfg = {
        "k": p.k,
        "detector": p.detector_kind,
        "seed": p.seed,
        "threshold": p.threshold,
        "config": p.config,
    }
    if p.standardizer is not None:
        cfg["standardizer"] = {
            "mean": list(p.standardizer.mean),
            "std": list(p.standardizer.std),
        }
    with open(os.path.join(out_dir, BUNDLE_CONFIG), "w") as f:
        json.dump(cfg, f, sort_keys=True, indent=2)
    with open(os.path.join(out_dir, BUNDLE_PROVENANCE), "w") as f:
        f.write(p.provenance + "\n")


def load_bundle(bundle_dir: str) -> TrainedPipeline:
    with open(os.path.join(bundle_dir, BUNDLE_CONFIG)) as f:
        cfg = json.load(f)
    reference, _ = read_k4em(os.path.join(bundle_dir, BUNDLE_REFERENCE))
    detector = load_model(os.path.join(bundle_dir, BUNDLE_MODEL))
    standardizer = None
    if "standardizer" in cfg:
        standardizer = Standardizer(
            np.asarray(cfg["standardizer"]["mean"]),
            np.asarray(cfg["standardizer"]["std"]),
        )
    p = TrainedPipeline(
        reference=reference,
        k=int(cfg["k"]),
        detector=detector,
        detector_kind=cfg["detector"],
        standardizer=standardizer,
        seed=int(cfg["seed"]),
        threshold=cfg.get("threshold"),
        config=cfg.get("config", {}),
    )
    with open(os.path.join(bundle_dir, BUNDLE_PROVENANCE)) as f:
        stored = f.read().strip()
    if stored != p.provenance:
        raise ValueError(
            f"{bundle_dir}: reference embeddings do not match stored provenance"
        )
    return p
