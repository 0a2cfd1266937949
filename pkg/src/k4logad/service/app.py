"""HTTP service exposing the typicality pipeline for online scoring.

Models are trained from posted normal-window embeddings, held in an
in-memory registry, and scored against by concurrent clients. Batch
experiment processing over on-disk corpora stays in the CLI; this
surface covers the long-running deployment side (train once, keep
scoring incoming windows).
"""

from __future__ import annotations

import uuid
from dataclasses import asdict

import numpy as np
from fastapi import FastAPI, HTTPException

from .. import __version__, metrics, pipeline, prdc
from . import schemas

app = FastAPI(title="k4logad", version=__version__)

_MODELS: dict[str, pipeline.TrainedPipeline] = {}


def _get_model(model_id: str) -> pipeline.TrainedPipeline:
    model = _MODELS.get(model_id)
    if model is None:
        raise HTTPException(status_code=404, detail=f"unknown model id {model_id}")
    return model


@app.get("/health", response_model=schemas.HealthResponse)
def health():
    return schemas.HealthResponse(
        status="ok", version=__version__, models=sorted(_MODELS)
    )


@app.post("/prdc", response_model=schemas.PrdcResponse)
def prdc_endpoint(req: schemas.PrdcRequest):
    try:
        rows = prdc.compute_prdc(
            np.asarray(req.reference, dtype=np.float64),
            np.asarray(req.query, dtype=np.float64),
            req.k,
        )
    except ValueError as exc:
        raise HTTPException(status_code=422, detail=str(exc))
    return schemas.PrdcResponse(rows=rows.tolist(), k=req.k)


@app.post("/models", response_model=schemas.TrainResponse)
def train_model(req: schemas.TrainRequest):
    try:
        trained = pipeline.train(
            np.asarray(req.embeddings, dtype=np.float64),
            k=req.k,
            detector=req.detector,
            detector_cfg=req.detector_cfg,
            seed=req.seed,
        )
        if req.threshold_percentile is not None:
            train_scores = trained.detector.score(trained.train_features)
            trained.threshold = pipeline.select_threshold(
                train_scores, req.threshold_percentile
            )
    except ValueError as exc:
        raise HTTPException(status_code=422, detail=str(exc))
    model_id = uuid.uuid4().hex[:12]
    _MODELS[model_id] = trained
    return schemas.TrainResponse(
        model_id=model_id,
        detector=trained.detector_kind,
        k=trained.k,
        reference_rows=trained.reference.shape[0],
        threshold=trained.threshold,
        provenance=trained.provenance,
    )


@app.post("/models/{model_id}/score", response_model=schemas.ScoreResponse)
def score_model(model_id: str, req: schemas.ScoreRequest):
    model = _get_model(model_id)
    try:
        scores = model.score(np.asarray(req.embeddings, dtype=np.float64))
    except ValueError as exc:
        raise HTTPException(status_code=422, detail=str(exc))
    labels = None
    if model.threshold is not None:
        labels = pipeline.classify(scores, model.threshold).tolist()
    return schemas.ScoreResponse(scores=scores.tolist(), labels=labels)


@app.delete("/models/{model_id}")
def delete_model(model_id: str):
    _get_model(model_id)
    del _MODELS[model_id]
    return {"deleted": model_id}


@app.post("/evaluate", response_model=schemas.EvaluateResponse)
def evaluate(req: schemas.EvaluateRequest):
    try:
        result = metrics.evaluate(
            np.asarray(req.scores, dtype=np.float64),
            np.asarray(req.labels, dtype=np.int64),
        )
    except ValueError as exc:
        raise HTTPException(status_code=422, detail=str(exc))
    return schemas.EvaluateResponse(**asdict(result))
