"""Request and response models of the HTTP service."""

from __future__ import annotations

from typing import Any, Literal, Optional

from pydantic import BaseModel, Field

JobState = Literal["queued", "running", "ok", "failed"]


class RunRequest(BaseModel):
    """A run: either an inline config mapping or a path to a YAML file."""

    config: Optional[dict[str, Any]] = None
    config_path: Optional[str] = None
    out_dir: Optional[str] = None
    scheme: Optional[Literal["aup", "upa"]] = None
    snapshot_every: Optional[int] = Field(default=None, ge=0)
    deterministic: Optional[bool] = None


class RunStatus(BaseModel):
    id: str
    state: JobState
    name: str
    out_dir: str
    step: int = -1
    n_steps: int = 0
    last_row: Optional[dict[str, float]] = None
    error: str = ""
    failed_step: Optional[int] = None


class CampaignRequest(BaseModel):
    name: str
    out_dir: Optional[str] = None
    scale: float = Field(default=1.0, gt=0)
    jobs: Optional[int] = Field(default=None, ge=1)


class PointStatus(BaseModel):
    label: str
    status: str
    out_dir: str
    error: str = ""
    summary: dict[str, Any] = {}


class CampaignStatus(BaseModel):
    id: str
    state: JobState
    name: str
    out_dir: str
    n_points: int
    points: list[PointStatus] = []
    exit_code: Optional[int] = None
    error: str = ""


class PresetInfo(BaseModel):
    name: str
    description: str
    n_points: int
    points: list[str]


class RunDirRequest(BaseModel):
    run_dir: str


class LedgerResponse(BaseModel):
    run_dir: str
    columns: list[str]
    rows: list[list[Optional[float]]]


class SnapshotRequest(BaseModel):
    run_dir: str
    step: Optional[int] = None


class SnapshotResponse(BaseModel):
    run_dir: str
    available: list[int]
    step: Optional[int] = None
    files: list[str] = []
    elastic: Optional[float] = None
    surface: Optional[float] = None
    plastic: Optional[float] = None
    total: Optional[float] = None
    max_alpha: Optional[float] = None
    max_eps_eq: Optional[float] = None


class KFitRequest(BaseModel):
    run_dir: str
    step: Optional[int] = None
    window: Optional[tuple[float, float]] = None  # in units of the tip mesh size


class KFitResponse(BaseModel):
    run_dir: str
    lam: float
    k_c: Optional[float] = None
    k_c_fit: Optional[float] = None
    nucleation_step: Optional[int] = None
    k_formula: Optional[float] = None
    step: Optional[int] = None
    k: Optional[float] = None
    residual: Optional[float] = None
    n_samples: Optional[int] = None


class CompareRequest(BaseModel):
    a: str
    b: str
    csv_out: Optional[str] = None
    min_jump: Optional[float] = None
