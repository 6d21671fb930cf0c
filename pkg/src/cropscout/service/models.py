"""Request/response models for the HTTP service.

Heavyweight inputs (images, manifests, datasets) are referenced by path —
the service is designed for local or shared-filesystem deployment — while
small inputs (vocabularies, templates) travel inline. Responses carry
fully serialized result records; clients own output files.
"""

from __future__ import annotations

from typing import Any, Literal, Optional

from pydantic import BaseModel, Field

DEFAULT_BACKENDS = "stub"


class DetectRequest(BaseModel):
    images: list[str] = Field(min_length=1)
    vocabulary: list[str] = Field(min_length=1)
    backends: str = DEFAULT_BACKENDS
    seed: int = 0
    workers: int = Field(default=1, ge=1, le=64)
    iou_threshold: float = 0.5
    mask_threshold: float = 0.5
    class_aware_nms: bool = True
    empty_mask_policy: Literal["keep", "drop"] = "keep"
    prompt_ensemble: bool = True
    prompt_templates: Optional[list[str]] = None
    include_masks: bool = True


class DetectResponse(BaseModel):
    records: list[dict[str, Any]]


class ClassifyRequest(BaseModel):
    images: list[str] = Field(min_length=1)
    vocabulary: list[str] = Field(min_length=1)
    backends: str = DEFAULT_BACKENDS
    seed: int = 0
    workers: int = Field(default=1, ge=1, le=64)
    temperature: float = 0.07
    prompt_ensemble: bool = True
    prompt_templates: Optional[list[str]] = None


class ClassifyResponse(BaseModel):
    records: list[dict[str, Any]]


class TrainAlignmentRequest(BaseModel):
    manifest: str
    epochs: int = 150
    learning_rate: float = 5e-7
    batch_size: int = 20
    temperature_init: float = 0.07
    seed: int = 0
    embedding_dim: int = Field(default=512, ge=2)
    feature_grid: int = Field(default=2, ge=1)
    split: Literal["train", "test"] = "train"


class TrainAlignmentResponse(BaseModel):
    trace: list[dict[str, float]]
    final_tau: float
    token_count: int
    params: dict[str, Any]
    seed: int


class EvalClassificationRequest(BaseModel):
    predictions: str
    truths: str
    vocabulary: Optional[list[str]] = None


class EvalClassificationResponse(BaseModel):
    report: dict[str, Any]
    table: str


class EvalDetectionRequest(BaseModel):
    detections: str
    dataset: str
    iou_thresholds: list[float] = Field(default=[0.5, 0.75], min_length=1)


class EvalDetectionResponse(BaseModel):
    report: dict[str, Any]
    table: str


class CaptionPromptsRequest(BaseModel):
    listing: str


class CaptionPromptsResponse(BaseModel):
    records: list[dict[str, str]]


class CaptionIngestRequest(BaseModel):
    listing: str
    responses: str
    default_split: Literal["train", "test"] = "train"
    check_consistency: bool = True


class CaptionIngestResponse(BaseModel):
    records: list[dict[str, str]]


class HealthResponse(BaseModel):
    status: str
    version: str


class BackendsResponse(BaseModel):
    suites: list[str]
