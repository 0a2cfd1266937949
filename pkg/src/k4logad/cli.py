"""Command-line entry point.

Subcommands: run, sweep, windows, embed, score, eval, serve. All batch
commands take a JSON config file (list-valued axes turn a run into a
sweep) and write artifacts under --out. --threads (or the K4_THREADS
env var) bounds the worker pool; --seed overrides the config seed.
"""

from __future__ import annotations

import json
import os
import sys

import click

from . import experiment
from .experiment import ExperimentConfig


def _load_cfg(config_path: str, seed: int | None) -> ExperimentConfig:
    cfg = ExperimentConfig.from_file(config_path)
    if seed is not None:
        cfg = cfg.model_copy(update={"seed": seed})
    return cfg


def _threads(value: int | None) -> int:
    if value is not None:
        return value
    env = os.environ.get("K4_THREADS")
    return int(env) if env else 1


common = [
    click.option("--config", "config_path", required=True, type=click.Path(exists=True)),
    click.option("--out", "out_dir", required=True, type=click.Path()),
    click.option("--threads", type=int, default=None, help="worker pool size"),
    click.option("--seed", type=int, default=None, help="override config seed"),
]


def with_common(fn):
    for opt in reversed(common):
        fn = opt(fn)
    return fn


@click.group()
def main():
    """Unsupervised log anomaly detection experiments."""


@main.command()
@with_common
def run(config_path, out_dir, threads, seed):
    """Full protocol: one detection experiment per chunk."""
    cfg = _load_cfg(config_path, seed)
    agg = experiment.run(cfg, out_dir, threads=_threads(threads))
    click.echo(json.dumps(agg["mean_metrics"], sort_keys=True))
    if not agg["chunks_reported"] and agg["chunks_skipped"]:
        raise click.ClickException("all chunks skipped: " + str(agg["chunks_skipped"]))


@main.command()
@with_common
def sweep(config_path, out_dir, threads, seed):
    """Cartesian sweep over list-valued config axes."""
    cfg = _load_cfg(config_path, seed)
    overview = experiment.sweep(cfg, out_dir, threads=_threads(threads))
    click.echo(
        f"{len(overview['cells_ok'])}/{overview['cells_total']} cells ok; "
        f"summary at {overview['summary_csv']}"
    )
    if overview["cells_failed"]:
        click.echo("failed cells: " + json.dumps(overview["cells_failed"]), err=True)
        sys.exit(1)


@main.command()
@with_common
def windows(config_path, out_dir, threads, seed):
    """Stage 1: window manifests per chunk."""
    cfg = _load_cfg(config_path, seed)
    chunks, _ = experiment.load_chunks(cfg)
    for chunk in chunks:
        ws = experiment.stage_windows(chunk, cfg, out_dir)
        click.echo(f"chunk {chunk.chunk_id}: {len(ws)} windows")


@main.command()
@with_common
def embed(config_path, out_dir, threads, seed):
    """Stage 2: split + embeddings (train.k4em / test.k4em) per chunk."""
    cfg = _load_cfg(config_path, seed)
    chunks, _ = experiment.load_chunks(cfg)
    for chunk in chunks:
        ws = experiment.stage_windows(chunk, cfg, out_dir)
        try:
            experiment.stage_embed(chunk, ws, cfg, out_dir)
        except experiment.ingest.UnusableChunkError as exc:
            click.echo(f"chunk {chunk.chunk_id}: skipped ({exc})")
            continue
        click.echo(f"chunk {chunk.chunk_id}: embedded")


@main.command()
@with_common
def score(config_path, out_dir, threads, seed):
    """Stage 3: train on train.k4em, score test.k4em, write scores.csv."""
    cfg = _load_cfg(config_path, seed)
    for cid in _chunk_ids(out_dir):
        if not os.path.exists(
            os.path.join(out_dir, f"chunk_{cid:03d}", "train.k4em")
        ):
            continue
        experiment.stage_score(cfg, out_dir, cid)
        click.echo(f"chunk {cid}: scored")


@main.command()
@with_common
def eval(config_path, out_dir, threads, seed):
    """Stage 4: metrics + diagnostics from scores.csv and the manifest."""
    cfg = _load_cfg(config_path, seed)
    for cid in _chunk_ids(out_dir):
        if not os.path.exists(
            os.path.join(out_dir, f"chunk_{cid:03d}", "scores.csv")
        ):
            continue
        rep = experiment.stage_eval(cfg, out_dir, cid)
        click.echo(f"chunk {cid}: " + json.dumps(rep["metrics"], sort_keys=True))


def _chunk_ids(out_dir: str) -> list[int]:
    ids = []
    if os.path.isdir(out_dir):
        for name in sorted(os.listdir(out_dir)):
            if name.startswith("chunk_") and name[6:].isdigit():
                ids.append(int(name[6:]))
    return ids


@main.command()
@click.option("--host", default="127.0.0.1")
@click.option("--port", type=int, default=8000)
def serve(host, port):
    """Launch the HTTP scoring service."""
    import uvicorn

    from .service.app import app

    uvicorn.run(app, host=host, port=port)


if __name__ == "__main__":
    main()
