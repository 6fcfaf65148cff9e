"""Request/response models for the HTTP service."""

from __future__ import annotations

from typing import Literal

from pydantic import BaseModel, Field

SuiteName = Literal["degree", "oracle", "grad", "se-identity", "fold", "all"]


class HealthResponse(BaseModel):
    status: str
    version: str


class VerifyRequest(BaseModel):
    suite: SuiteName = "all"
    seed: int = 0


class CheckRow(BaseModel):
    name: str
    passed: bool
    measured: float | None  # None when the probe itself errored out
    bound: float
    detail: str = ""


class VerifyResponse(BaseModel):
    suite: SuiteName
    seed: int
    passed: bool
    checks: list[CheckRow]


class CountParamsRequest(BaseModel):
    arch: str


class CountParamsResponse(BaseModel):
    name: str
    params: int
    millions: float  # table-style one-decimal rounding


class SynthRequest(BaseModel):
    d: int = Field(ge=2)
    n_per_class: int = Field(ge=1)
    seed: int = 0
    out: str


class SubsampleRequest(BaseModel):
    src: str
    m: int = Field(ge=1)
    seed: int = 0
    out: str


class LongtailRequest(BaseModel):
    src: str
    ratio: float = Field(ge=1)
    seed: int = 0
    out: str


class DatasetInfo(BaseModel):
    path: str
    classes: int
    samples: int
    counts: list[int]


class TrainRequest(BaseModel):
    arch: str
    data: str
    out_dir: str
    eval_data: str | None = None
    repeats: int = Field(default=1, ge=1)
    seed: int = 0
    epochs: int | None = Field(default=None, ge=1)
    batch: int | None = Field(default=None, ge=1)
    lr0: float | None = Field(default=None, ge=0)
    milestones: list[int] | None = None
    gamma: float | None = Field(default=None, gt=0, le=1)
    momentum: float | None = None
    weight_decay: float | None = None


class RunRow(BaseModel):
    run: int
    seed: int
    csv: str
    checkpoint: str
    final_train_acc: float
    final_eval_acc: float


class TrainResponse(BaseModel):
    label: str
    runs: list[RunRow]
    mean_eval_acc: float
    std_eval_acc: float


class EvalRequest(BaseModel):
    checkpoint: str
    data: str


class EvalResponse(BaseModel):
    accuracy: float
    samples: int


class ReportRequest(BaseModel):
    runs_dir: str


class ReportRow(BaseModel):
    label: str
    runs: int
    eval_acc_mean: float
    eval_acc_std: float
    train_acc_mean: float
    train_acc_std: float


class ReportResponse(BaseModel):
    rows: list[ReportRow]
    csv: str
