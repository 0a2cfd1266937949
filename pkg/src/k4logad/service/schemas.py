"""Request/response models for the HTTP scoring service."""

from __future__ import annotations

from pydantic import BaseModel, Field


class PrdcRequest(BaseModel):
    reference: list[list[float]]
    query: list[list[float]]
    k: int = 5


class PrdcResponse(BaseModel):
    rows: list[list[float]]
    k: int


class TrainRequest(BaseModel):
    embeddings: list[list[float]] = Field(
        description="embeddings of normal windows only"
    )
    k: int = 5
    detector: str = "deepsvdd"
    detector_cfg: dict = Field(default_factory=dict)
    seed: int = 0
    threshold_percentile: float | None = 95.0


class TrainResponse(BaseModel):
    model_id: str
    detector: str
    k: int
    reference_rows: int
    threshold: float | None
    provenance: str


class ScoreRequest(BaseModel):
    embeddings: list[list[float]]


class ScoreResponse(BaseModel):
    scores: list[float]
    labels: list[int] | None = None


class EvaluateRequest(BaseModel):
    scores: list[float]
    labels: list[int]


class EvaluateResponse(BaseModel):
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


class HealthResponse(BaseModel):
    status: str
    version: str
    models: list[str]
