"""Chunk-based experiment protocol: run, sweep, and staged execution.

One experiment cell = (chunk, window size W, stride S, k, embedding,
detector, training size). Each chunk is windowed, split into
train / normal-test / anomalous-test sets, embedded, trained through
the typicality pipeline, scored, and evaluated.

Execution is staged through on-disk artifacts (window manifest CSV,
K4EM embeddings, K4DM model bundle, scores CSV, metrics JSON) so that
``run`` and the individual stage commands produce bit-identical outputs
and pipelines can be resumed or fed externally produced embeddings.

Timing lands in a separate ``timing.json`` per chunk: metric artifacts
are byte-deterministic for a fixed (dataset, config, seed), wall-clock
numbers are not.
"""

from __future__ import annotations

import csv
import itertools
import json
import os
import statistics
import time
from concurrent.futures import ThreadPoolExecutor
from typing import Literal

import numpy as np
from pydantic import BaseModel, Field

from . import ingest, metrics, pipeline
from .embedding import (
    embed_tfidf_many,
    fit_tfidf,
    load_external,
    write_k4em,
    read_k4em,
)

SWEEP_AXES = ("window", "stride", "k", "n_train", "detector")


class ExperimentConfig(BaseModel):
    """One experiment (or a sweep grid when list-valued axes are given)."""

    dataset: str
    format: Literal["hdfs", "bgl_tbird", "generic"] = "generic"
    hdfs_labels: str | None = None
    chunk_size: int = Field(default=ingest.CHUNK_SIZE_DEFAULT, ge=1)
    max_chunks: int | None = None

    window: int | list[int] = 320
    stride: int | list[int] = 5
    k: int | list[int] = 5

    embedding: Literal["tfidf", "external"] = "tfidf"
    external_embeddings: str | None = None
    max_features: int = 5000

    detector: str | list[str] = "deepsvdd"
    detector_cfg: dict = Field(default_factory=dict)

    n_train: int | list[int] = 5000
    n_test_normal: int = Field(default=5000, ge=1)
    n_test_anomalous: int = Field(default=5000, ge=1)

    seed: int = 0
    curation: bool = True
    keywords: list[str] = Field(default_factory=lambda: list(ingest.DEFAULT_KEYWORDS))
    exclusion_radius: int = Field(default=0, ge=0)
    percentile: float = 95.0

    def is_sweep(self) -> bool:
        return any(isinstance(getattr(self, ax), list) for ax in SWEEP_AXES)

    def cells(self) -> list["ExperimentConfig"]:
        """Cartesian expansion of list-valued sweep axes."""
        axes = []
        for ax in SWEEP_AXES:
            v = getattr(self, ax)
            axes.append(v if isinstance(v, list) else [v])
        out = []
        for combo in itertools.product(*axes):
            cell = self.model_copy(update=dict(zip(SWEEP_AXES, combo)))
            out.append(cell)
        return out

    def cell_name(self) -> str:
        return (
            f"W{self.window}_S{self.stride}_k{self.k}"
            f"_n{self.n_train}_{self.detector}"
        )

    @classmethod
    def from_file(cls, path: str) -> "ExperimentConfig":
        with open(path) as f:
            return cls.model_validate(json.load(f))


def _dump_json(obj, path: str) -> None:
    with open(path, "w") as f:
        json.dump(obj, f, sort_keys=True, indent=2)
        f.write("\n")


def load_chunks(cfg: ExperimentConfig) -> tuple[list[ingest.Chunk], dict]:
    warnings: dict[str, int] = {}
    labels = (
        ingest.load_hdfs_labels(cfg.hdfs_labels) if cfg.format == "hdfs" else None
    )
    lines = ingest.parse_dataset(
        cfg.dataset, cfg.format, hdfs_labels=labels, warnings=warnings
    )
    chunks = []
    for chunk in ingest.chunk_stream(lines, cfg.chunk_size):
        chunks.append(chunk)
        if cfg.max_chunks is not None and len(chunks) >= cfg.max_chunks:
            break
    return chunks, warnings


# -- stages -----------------------------------------------------------------


def _chunk_dir(out_dir: str, chunk_id: int) -> str:
    return os.path.join(out_dir, f"chunk_{chunk_id:03d}")


def stage_windows(chunk: ingest.Chunk, cfg: ExperimentConfig, out_dir: str):
    """Window the chunk and persist the manifest CSV."""
    windows = ingest.make_windows(chunk, int(cfg.window), int(cfg.stride))
    cdir = _chunk_dir(out_dir, chunk.chunk_id)
    os.makedirs(cdir, exist_ok=True)
    ingest.write_manifest(windows, os.path.join(cdir, "manifest.csv"))
    return windows


def stage_embed(
    chunk: ingest.Chunk,
    windows: list[ingest.LabeledWindow],
    cfg: ExperimentConfig,
    out_dir: str,
) -> dict:
    """Split, fit the embedder on training windows, write K4EM files.

    Returns the timing record for the embedding stage.
    """
    cdir = _chunk_dir(out_dir, chunk.chunk_id)
    eligible = None
    if cfg.curation:
        eligible = ingest.keyword_filter(
            windows, cfg.keywords, cfg.exclusion_radius
        )
    split = ingest.sample_sets(
        windows,
        int(cfg.n_train),
        cfg.n_test_normal,
        cfg.n_test_anomalous,
        cfg.seed,
        train_eligible=eligible,
    )
    _dump_json(
        {
            "train": split.train,
            "test_normal": split.test_normal,
            "test_anomalous": split.test_anomalous,
            "seed": split.seed,
            "shortfall_train": split.shortfall_train,
            "shortfall_test_normal": split.shortfall_test_normal,
            "shortfall_test_anomalous": split.shortfall_test_anomalous,
        },
        os.path.join(cdir, "split.json"),
    )
    test_ids = split.test_normal + split.test_anomalous

    if cfg.embedding == "tfidf":
        t0 = time.perf_counter()
        vocab = fit_tfidf(
            (windows[i].text for i in split.train), max_features=cfg.max_features
        )
        e_train = embed_tfidf_many(vocab, (windows[i].text for i in split.train))
        embed_train_s = time.perf_counter() - t0
        e_test = embed_tfidf_many(vocab, (windows[i].text for i in test_ids))
        vocab.save_csv(os.path.join(cdir, "vocab.csv"))
    else:
        if not cfg.external_embeddings:
            raise ValueError("external embedding requires external_embeddings path")
        t0 = time.perf_counter()
        matrix, ids = load_external(
            cfg.external_embeddings, ingest.read_manifest(os.path.join(cdir, "manifest.csv"))
        )
        embed_train_s = time.perf_counter() - t0
        index = {wid: r for r, wid in enumerate(ids)}

        def rows(idxs):
            sel = []
            for i in idxs:
                wid = (windows[i].chunk_id, windows[i].start)
                if wid not in index:
                    raise ValueError(f"window id {wid} missing from external file")
                sel.append(index[wid])
            return matrix[sel]

        e_train = rows(split.train)
        e_test = rows(test_ids)

    write_k4em(
        os.path.join(cdir, "train.k4em"),
        e_train,
        [(windows[i].chunk_id, windows[i].start) for i in split.train],
    )
    write_k4em(
        os.path.join(cdir, "test.k4em"),
        e_test,
        [(windows[i].chunk_id, windows[i].start) for i in test_ids],
    )
    return {"embed_train_s": embed_train_s}


def stage_score(cfg: ExperimentConfig, out_dir: str, chunk_id: int) -> dict:
    """Train the pipeline on train.k4em, score test.k4em, persist bundle,
    scores CSV, and the timing record."""
    cdir = _chunk_dir(out_dir, chunk_id)
    e_train, _ = read_k4em(os.path.join(cdir, "train.k4em"))
    e_test, test_ids = read_k4em(os.path.join(cdir, "test.k4em"))

    t0 = time.perf_counter()
    trained = pipeline.train(
        e_train,
        k=int(cfg.k),
        detector=str(cfg.detector),
        detector_cfg=cfg.detector_cfg,
        seed=cfg.seed,
    )
    fit_s = time.perf_counter() - t0

    train_scores = trained.detector.score(trained.train_features)
    trained.threshold = pipeline.select_threshold(train_scores, cfg.percentile)
    scores = trained.score(e_test)

    # median single-sample detector latency over 1000 repetitions
    one = trained.train_features[:1]
    reps = []
    for _ in range(1000):
        t0 = time.perf_counter()
        trained.detector.score(one)
        reps.append(time.perf_counter() - t0)
    per_sample_s = statistics.median(reps)

    pipeline.save_bundle(trained, os.path.join(cdir, "bundle"))
    with open(os.path.join(cdir, "scores.csv"), "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["chunk_id", "start", "score"])
        for (cid, start), s in zip(test_ids, scores):
            w.writerow([cid, start, repr(float(s))])
    return {"fit_s": fit_s, "per_sample_inference_s": per_sample_s}


def stage_eval(cfg: ExperimentConfig, out_dir: str, chunk_id: int) -> dict:
    """Join scores with manifest labels, compute metrics + diagnostics."""
    cdir = _chunk_dir(out_dir, chunk_id)
    manifest = {
        (r["chunk_id"], r["start"]): r
        for r in ingest.read_manifest(os.path.join(cdir, "manifest.csv"))
    }
    scores, labels, counts = [], [], []
    with open(os.path.join(cdir, "scores.csv"), newline="") as f:
        for row in csv.DictReader(f):
            wid = (int(row["chunk_id"]), int(row["start"]))
            scores.append(float(row["score"]))
            labels.append(manifest[wid]["label"])
            counts.append(manifest[wid]["anomaly_count"])
    scores = np.asarray(scores)
    labels = np.asarray(labels)
    counts = np.asarray(counts)

    with open(os.path.join(cdir, "bundle", "config.json")) as f:
        threshold = json.load(f)["threshold"]
    predicted = pipeline.classify(scores, threshold)

    result = metrics.evaluate(scores, labels)
    anom = labels == 1
    metrics.export_diagnostics(
        scores,
        labels,
        cdir,
        anomaly_counts=counts[anom],
        detected=predicted[anom].astype(bool),
    )
    with open(os.path.join(cdir, "split.json")) as f:
        split = json.load(f)
    report = {
        "chunk_id": chunk_id,
        "config": json.loads(cfg.model_dump_json()),
        "metrics": json.loads(result.to_json()),
        "deploy_threshold": threshold,
        "shortfalls": {
            "train": split["shortfall_train"],
            "test_normal": split["shortfall_test_normal"],
            "test_anomalous": split["shortfall_test_anomalous"],
        },
    }
    _dump_json(report, os.path.join(cdir, "report.json"))
    return report


def run_chunk(chunk: ingest.Chunk, cfg: ExperimentConfig, out_dir: str) -> dict:
    """All four stages for one chunk; returns the chunk report."""
    windows = stage_windows(chunk, cfg, out_dir)
    timing = stage_embed(chunk, windows, cfg, out_dir)
    timing.update(stage_score(cfg, out_dir, chunk.chunk_id))
    _dump_json(timing, os.path.join(_chunk_dir(out_dir, chunk.chunk_id), "timing.json"))
    return stage_eval(cfg, out_dir, chunk.chunk_id)


def run(cfg: ExperimentConfig, out_dir: str, threads: int = 1) -> dict:
    """One report per usable chunk plus an aggregate over chunk means."""
    if cfg.is_sweep():
        raise ValueError("config has list-valued axes; use sweep")
    os.makedirs(out_dir, exist_ok=True)
    chunks, warnings = load_chunks(cfg)

    reports: dict[int, dict] = {}
    skipped: dict[int, str] = {}

    def work(chunk):
        try:
            reports[chunk.chunk_id] = run_chunk(chunk, cfg, out_dir)
        except ingest.UnusableChunkError as exc:
            skipped[chunk.chunk_id] = str(exc)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            list(pool.map(work, chunks))
    else:
        for chunk in chunks:
            work(chunk)

    agg_metrics = {}
    if reports:
        keys = reports[next(iter(sorted(reports)))]["metrics"].keys()
        for key in keys:
            agg_metrics[key] = float(
                np.mean([reports[cid]["metrics"][key] for cid in sorted(reports)])
            )
    aggregate = {
        "config": json.loads(cfg.model_dump_json()),
        "chunks_total": len(chunks),
        "chunks_reported": sorted(reports),
        "chunks_skipped": {str(k): v for k, v in sorted(skipped.items())},
        "parse_warnings": warnings,
        "mean_metrics": agg_metrics,
    }
    _dump_json(aggregate, os.path.join(out_dir, "aggregate.json"))
    return aggregate


def sweep(cfg: ExperimentConfig, out_dir: str, threads: int = 1) -> dict:
    """Cartesian sweep over list-valued axes; per-cell reports plus a
    flat summary CSV (one row per cell x usable chunk)."""
    os.makedirs(out_dir, exist_ok=True)
    cells = cfg.cells()
    results = {}
    failures = {}

    def work(cell):
        cell_dir = os.path.join(out_dir, cell.cell_name())
        try:
            results[cell.cell_name()] = run(cell, cell_dir, threads=1)
        except Exception as exc:  # cell isolation: sweep continues
            failures[cell.cell_name()] = f"{type(exc).__name__}: {exc}"

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            list(pool.map(work, cells))
    else:
        for cell in cells:
            work(cell)

    summary_path = os.path.join(out_dir, "summary.csv")
    metric_keys = [
        "auroc", "auprc", "fpr_at_95tpr", "f1", "precision", "recall",
    ]
    with open(summary_path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(
            ["cell", "window", "stride", "k", "n_train", "detector", "chunk_id"]
            + metric_keys
        )
        for cell in cells:
            name = cell.cell_name()
            agg = results.get(name)
            if agg is None:
                continue
            for cid in agg["chunks_reported"]:
                with open(
                    os.path.join(out_dir, name, f"chunk_{cid:03d}", "report.json")
                ) as rf:
                    rep = json.load(rf)
                w.writerow(
                    [name, cell.window, cell.stride, cell.k, cell.n_train,
                     cell.detector, cid]
                    + [repr(rep["metrics"][mk]) for mk in metric_keys]
                )
    overview = {
        "cells_total": len(cells),
        "cells_ok": sorted(results),
        "cells_failed": dict(sorted(failures.items())),
        "summary_csv": summary_path,
    }
    _dump_json(overview, os.path.join(out_dir, "sweep.json"))
    return overview
