"""Pydantic request/response models for the experiment service."""

from __future__ import annotations

from typing import Optional

from pydantic import BaseModel


class CommandRequest(BaseModel):
    """Shared request shape: a config file by path or inline text, plus overrides."""

    config_path: Optional[str] = None
    config_text: Optional[str] = None
    dataset_seed: Optional[int] = None
    seeds: Optional[list[int]] = None
    out_dir: Optional[str] = None
    norm_backbone: Optional[str] = None
    norm_head: Optional[str] = None


class GenerateResponse(BaseModel):
    files: list[str]
    num_samples: int
    modality_offset: list[float]


class RunSummary(BaseModel):
    configuration: str
    seeds: int
    rank1_mean: float
    rank1_std: float
    map_mean: float
    map_std: float


class TrainResponse(BaseModel):
    files: list[str]
    summary: list[RunSummary]


class StagePoint(BaseModel):
    stage: str
    gap: float


class GapResponse(BaseModel):
    files: list[str]
    stage_trace_bn: list[StagePoint]
    stage_trace_mbn: list[StagePoint]


class ReportRequest(BaseModel):
    out_dir: str


class ReportResponse(BaseModel):
    files: list[str]


class ErrorResponse(BaseModel):
    error_kind: str
    message: str
