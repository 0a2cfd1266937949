import filecmp
import json
import os

import pytest

from k4logad import experiment
from k4logad.experiment import ExperimentConfig

from conftest import write_synthetic_corpus


@pytest.fixture(scope="module")
def corpus(tmp_path_factory):
    path = tmp_path_factory.mktemp("data") / "corpus.log"
    write_synthetic_corpus(path, n_lines=6000, anomaly_rate=0.02, burst_len=30)
    return str(path)


def _config(corpus, **overrides):
    base = dict(
        dataset=corpus,
        format="generic",
        chunk_size=3000,
        window=40,
        stride=5,
        k=3,
        embedding="tfidf",
        max_features=200,
        detector="kde",
        n_train=60,
        n_test_normal=60,
        n_test_anomalous=30,
        seed=7,
        percentile=95.0,
    )
    base.update(overrides)
    return ExperimentConfig(**base)


ARTIFACTS = [
    "manifest.csv",
    "split.json",
    "vocab.csv",
    "train.k4em",
    "test.k4em",
    "scores.csv",
    "report.json",
    "roc_points.csv",
    "score_hist.csv",
    "bundle/detector.k4dm",
    "bundle/reference.k4em",
    "bundle/config.json",
    "bundle/provenance.sha256",
]


def _assert_chunk_dirs_equal(a, b, chunk_id=0):
    ca = os.path.join(a, f"chunk_{chunk_id:03d}")
    cb = os.path.join(b, f"chunk_{chunk_id:03d}")
    for name in ARTIFACTS:
        pa, pb = os.path.join(ca, name), os.path.join(cb, name)
        assert os.path.exists(pa), f"missing {pa}"
        assert filecmp.cmp(pa, pb, shallow=False), f"artifact differs: {name}"


# -- config ------------------------------------------------------------------


def test_config_file_roundtrip(corpus, tmp_path):
    cfg = _config(corpus)
    path = tmp_path / "cfg.json"
    path.write_text(cfg.model_dump_json())
    assert ExperimentConfig.from_file(str(path)) == cfg


def test_config_sweep_detection(corpus):
    assert not _config(corpus).is_sweep()
    assert _config(corpus, window=[40, 80]).is_sweep()


def test_config_cells_cartesian(corpus):
    cfg = _config(corpus, window=[40, 80], detector=["kde", "gmm"])
    cells = cfg.cells()
    assert len(cells) == 4
    assert len({c.cell_name() for c in cells}) == 4
    assert all(not c.is_sweep() for c in cells)


# -- run ---------------------------------------------------------------------


def test_run_reports_every_chunk(corpus, tmp_path):
    out = tmp_path / "run"
    agg = experiment.run(_config(corpus), str(out))
    assert agg["chunks_total"] == 2
    reported = agg["chunks_reported"]
    skipped = agg["chunks_skipped"]
    assert len(reported) + len(skipped) == 2
    assert reported, "no usable chunk in the synthetic corpus"
    for cid in reported:
        rep = json.load(open(out / f"chunk_{cid:03d}" / "report.json"))
        assert 0.0 <= rep["metrics"]["auroc"] <= 1.0
        assert rep["config"]["seed"] == 7
        # timing lives in its own artifact, outside the deterministic set
        timing = json.load(open(out / f"chunk_{cid:03d}" / "timing.json"))
        assert timing["fit_s"] > 0
        assert timing["embed_train_s"] > 0
        assert timing["per_sample_inference_s"] > 0


def test_run_shortfall_recorded(corpus, tmp_path):
    agg = experiment.run(
        _config(corpus, n_test_anomalous=5000), str(tmp_path / "run")
    )
    cid = agg["chunks_reported"][0]
    rep = json.load(open(tmp_path / "run" / f"chunk_{cid:03d}" / "report.json"))
    assert rep["shortfalls"]["test_anomalous"] > 0


def test_run_deterministic_reruns(corpus, tmp_path):
    cfg = _config(corpus)
    a, b = tmp_path / "a", tmp_path / "b"
    agg_a = experiment.run(cfg, str(a))
    agg_b = experiment.run(cfg, str(b))
    assert agg_a["mean_metrics"] == agg_b["mean_metrics"]
    for cid in agg_a["chunks_reported"]:
        _assert_chunk_dirs_equal(str(a), str(b), cid)


def test_run_thread_count_invariant(corpus, tmp_path):
    cfg = _config(corpus)
    a, b = tmp_path / "t1", tmp_path / "t4"
    agg_a = experiment.run(cfg, str(a), threads=1)
    agg_b = experiment.run(cfg, str(b), threads=4)
    assert agg_a["chunks_reported"] == agg_b["chunks_reported"]
    for cid in agg_a["chunks_reported"]:
        _assert_chunk_dirs_equal(str(a), str(b), cid)


def test_run_rejects_sweep_config(corpus, tmp_path):
    with pytest.raises(ValueError):
        experiment.run(_config(corpus, window=[40, 80]), str(tmp_path))


# -- staged == fused ---------------------------------------------------------


def test_staged_equals_fused(corpus, tmp_path):
    cfg = _config(corpus, max_chunks=1)
    fused = tmp_path / "fused"
    staged = tmp_path / "staged"
    experiment.run(cfg, str(fused))

    chunks, _ = experiment.load_chunks(cfg)
    for chunk in chunks:
        windows = experiment.stage_windows(chunk, cfg, str(staged))
        experiment.stage_embed(chunk, windows, cfg, str(staged))
        experiment.stage_score(cfg, str(staged), chunk.chunk_id)
        experiment.stage_eval(cfg, str(staged), chunk.chunk_id)
    _assert_chunk_dirs_equal(str(fused), str(staged), 0)


def test_stage_score_from_external_embeddings(corpus, tmp_path):
    # embeddings written by one process can be scored by another
    cfg = _config(corpus, max_chunks=1)
    out = tmp_path / "out"
    chunks, _ = experiment.load_chunks(cfg)
    windows = experiment.stage_windows(chunks[0], cfg, str(out))
    experiment.stage_embed(chunks[0], windows, cfg, str(out))
    timing = experiment.stage_score(cfg, str(out), 0)
    assert timing["fit_s"] > 0
    scores_csv = out / "chunk_000" / "scores.csv"
    rows = scores_csv.read_text().strip().splitlines()
    assert rows[0] == "chunk_id,start,score"
    assert len(rows) - 1 > 0


# -- sweep -------------------------------------------------------------------


def test_sweep_accounting(corpus, tmp_path):
    cfg = _config(corpus, max_chunks=1, detector=["kde", "gmm"])
    out = tmp_path / "sweep"
    overview = experiment.sweep(cfg, str(out))
    assert overview["cells_total"] == 2
    assert len(overview["cells_ok"]) == 2
    rows = (
        (out / "summary.csv").read_text().strip().splitlines()
    )
    # one row per (cell, usable chunk)
    usable = sum(
        len(json.load(open(out / name / "aggregate.json"))["chunks_reported"])
        for name in overview["cells_ok"]
    )
    assert len(rows) - 1 == usable


def test_sweep_degenerate_equals_run(corpus, tmp_path):
    cfg = _config(corpus, max_chunks=1)
    run_dir = tmp_path / "run"
    sweep_dir = tmp_path / "sweep"
    experiment.run(cfg, str(run_dir))
    overview = experiment.sweep(cfg, str(sweep_dir))
    assert overview["cells_ok"] == [cfg.cell_name()]
    _assert_chunk_dirs_equal(str(run_dir), str(sweep_dir / cfg.cell_name()), 0)


def test_sweep_isolates_cell_failures(corpus, tmp_path):
    # second cell has too few training rows for k=3 and must fail alone
    cfg = _config(corpus, max_chunks=1, n_train=[60, 5], detector="kde")
    overview = experiment.sweep(cfg, str(tmp_path / "sweep"))
    assert len(overview["cells_ok"]) == 1
    assert len(overview["cells_failed"]) == 1
