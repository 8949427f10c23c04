"""Pydantic request/response models for the HTTP API.

Paths in requests refer to the server's filesystem: the service is a
desk-scale tool meant to run next to its data. Config overrides accept the
same keys as a config file; None means "keep the default / file value".
"""

from __future__ import annotations

from typing import Literal, Optional

from pydantic import BaseModel, Field


class ConfigOverrides(BaseModel):
    """Optional per-request config overrides; unknown keys are rejected upstream."""

    model_config = {"extra": "allow"}


class GenSyntheticRequest(BaseModel):
    out_dir: str
    seed: int = 0
    videos: int = 8
    frames: int = 200
    dim: int = 32
    keyframe_fraction: float = 0.15
    captions: int = 7
    annotators: int = 3
    shot_len: int = 10
    text_kind: Literal["captions", "query"] = "captions"
    test_fraction: float = 0.25
    fps: float = 2.0
    two_topic: bool = False


class GenSyntheticResponse(BaseModel):
    manifest: str
    extra_files: dict[str, str] = Field(default_factory=dict)


class TrainRequest(BaseModel):
    manifest: str
    checkpoint_out: str
    config_file: Optional[str] = None
    config: dict = Field(default_factory=dict)
    split: Optional[str] = "train"


class EpochLog(BaseModel):
    epoch: int
    total: float
    l_c: Optional[float] = None
    l_d: float
    l_r: float


class TrainResponse(BaseModel):
    checkpoint: str
    epochs: int
    history: list[EpochLog]


class ScoreRequest(BaseModel):
    checkpoint: str
    frames: str
    text: str  # captions or query feature file


class ScoreResponse(BaseModel):
    video_id: str
    scores: list[float]


class SummarizeRequest(BaseModel):
    checkpoint: str
    frames: str
    text: str
    ground_truth: Optional[str] = None  # source of shot boundaries, if any
    budget_fraction: Optional[float] = None
    out: Optional[str] = None


class ShotOut(BaseModel):
    index: int
    start: int
    end: int
    value: float


class SummarizeResponse(BaseModel):
    video_id: str
    n_frames: int
    budget_fraction: float
    budget_frames: int
    total_selected_frames: int
    selected_shots: list[ShotOut]
    frame_mask_rle: list[list[int]]


class EvaluateRequest(BaseModel):
    checkpoint: str
    manifest: str
    split: Optional[str] = "test"
    f1_mode: Optional[Literal["avg", "max"]] = None
    budget_fraction: Optional[float] = None
    out: Optional[str] = None
    csv_out: Optional[str] = None


class VideoMetricsOut(BaseModel):
    video_id: str
    precision: float
    recall: float
    f1: float
    per_reference_f1: list[float]
    tau: Optional[float] = None
    rho: Optional[float] = None


class EvaluateResponse(BaseModel):
    f1_mode: str
    mean_f1: float
    mean_tau: float
    mean_rho: float
    videos: list[VideoMetricsOut]


class InspectRequest(BaseModel):
    path: str


class InspectResponse(BaseModel):
    valid: bool
    video_id: str
    kind: str
    rows: int
    dim: int
    fps: float
    min_value: float
    max_value: float
    mean_value: float


class HealthResponse(BaseModel):
    status: str
    version: str


class ConfigResponse(BaseModel):
    defaults: dict
