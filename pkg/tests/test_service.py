import numpy as np
import pytest
from fastapi.testclient import TestClient

from k4logad import prdc
from k4logad.service.app import app, _MODELS

client = TestClient(app)

RNG = np.random.default_rng(17)


@pytest.fixture(autouse=True)
def clean_registry():
    _MODELS.clear()
    yield
    _MODELS.clear()


def _train_payload(n=40, seed=0, **overrides):
    payload = {
        "embeddings": np.random.default_rng(seed).normal(size=(n, 4)).tolist(),
        "k": 3,
        "detector": "kde",
        "seed": 1,
        "threshold_percentile": 95.0,
    }
    payload.update(overrides)
    return payload


def test_health():
    r = client.get("/health")
    assert r.status_code == 200
    body = r.json()
    assert body["status"] == "ok"
    assert body["models"] == []


def test_prdc_endpoint_matches_library():
    ref = RNG.normal(size=(20, 3))
    query = RNG.normal(size=(10, 3))
    r = client.post(
        "/prdc", json={"reference": ref.tolist(), "query": query.tolist(), "k": 2}
    )
    assert r.status_code == 200
    rows = np.asarray(r.json()["rows"])
    np.testing.assert_allclose(rows, prdc.compute_prdc(ref, query, 2), atol=1e-12)


def test_prdc_endpoint_rejects_bad_k():
    r = client.post(
        "/prdc",
        json={"reference": [[0.0], [1.0]], "query": [[0.5], [0.7]], "k": 5},
    )
    assert r.status_code == 422


def test_train_score_delete_cycle():
    r = client.post("/models", json=_train_payload())
    assert r.status_code == 200
    body = r.json()
    model_id = body["model_id"]
    assert body["detector"] == "kde"
    assert body["threshold"] is not None
    assert len(body["provenance"]) == 64

    q = RNG.normal(size=(8, 4)).tolist()
    r = client.post(f"/models/{model_id}/score", json={"embeddings": q})
    assert r.status_code == 200
    out = r.json()
    assert len(out["scores"]) == 8
    assert set(out["labels"]) <= {0, 1}

    assert client.get("/health").json()["models"] == [model_id]
    assert client.delete(f"/models/{model_id}").status_code == 200
    assert client.get("/health").json()["models"] == []


def test_score_without_threshold_returns_no_labels():
    r = client.post("/models", json=_train_payload(threshold_percentile=None))
    model_id = r.json()["model_id"]
    q = RNG.normal(size=(8, 4)).tolist()
    out = client.post(f"/models/{model_id}/score", json={"embeddings": q}).json()
    assert out["labels"] is None


def test_score_unknown_model():
    r = client.post("/models/doesnotexist/score", json={"embeddings": [[0.0] * 4]})
    assert r.status_code == 404


def test_train_rejects_undersized_input():
    r = client.post("/models", json=_train_payload(n=5))
    assert r.status_code == 422


def test_score_rejects_undersized_batch():
    model_id = client.post("/models", json=_train_payload()).json()["model_id"]
    r = client.post(
        "/models/{}/score".format(model_id),
        json={"embeddings": RNG.normal(size=(2, 4)).tolist()},
    )
    assert r.status_code == 422


def test_evaluate_endpoint():
    r = client.post(
        "/evaluate",
        json={"scores": [0.9, 0.8, 0.1, 0.2], "labels": [1, 1, 0, 0]},
    )
    assert r.status_code == 200
    body = r.json()
    assert body["auroc"] == 1.0
    assert body["f1"] == 1.0


def test_evaluate_single_class_rejected():
    r = client.post("/evaluate", json={"scores": [0.5, 0.6], "labels": [1, 1]})
    assert r.status_code == 422
