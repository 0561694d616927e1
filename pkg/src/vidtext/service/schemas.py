"""Request/response models for the HTTP service."""

from __future__ import annotations

from pydantic import BaseModel, ConfigDict


class CorpusRequest(BaseModel):
    model_config = ConfigDict(extra="forbid")
    config: dict
    out_dir: str


class CorpusResponse(BaseModel):
    manifest: str
    num_clips: int
    train_size: int
    val_size: int


class PretrainRequest(BaseModel):
    model_config = ConfigDict(extra="forbid")
    config: dict
    out_dir: str
    resume: str | None = None


class RunResponse(BaseModel):
    checkpoint: str
    log: str
    steps: int
    final_report: dict
    config_hash: str


class FinetuneRequest(BaseModel):
    model_config = ConfigDict(extra="forbid")
    config: dict
    checkpoint: str
    task: str
    out_dir: str


class EvaluateRequest(BaseModel):
    model_config = ConfigDict(extra="forbid")
    config: dict
    checkpoint: str
    task: str
    split: str = "val"
    out_dir: str | None = None


class MetricsResponse(BaseModel):
    task: str
    split: str
    metrics: dict
    num_instances: int
    seed: int
    checkpoint: str
    config_hash: str


class GradCheckRequest(BaseModel):
    model_config = ConfigDict(extra="forbid")
    seed: int = 0
    coords_per_param: int = 2


class GradCheckResponse(BaseModel):
    losses: dict
    max_rel_err: float
    runtime_s: float
    coords_per_param: int
    fd_step: float


class SweepRequest(BaseModel):
    model_config = ConfigDict(extra="forbid")
    config: dict  # base run config
    out_dir: str
    targets: list[list[str] | None] | None = None
    masking: list[list[str]] | None = None
    ratios: list[float] | None = None
    loss_kinds: list[str] | None = None
    head_kinds: list[str] | None = None


class SweepResponse(BaseModel):
    columns: list[str]
    rows: list[dict]
    table: str
    out_dir: str


class HealthResponse(BaseModel):
    status: str
    version: str
