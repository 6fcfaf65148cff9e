"""HTTP service exposing verification, counting, data tooling, and training.

The service owns all heavy work; the command-line tool is a thin client that
talks to this app either in-process or over the network.  Verification
failures are results, not errors: /verify answers 200 with ``passed`` false
and the caller decides what that means for its exit code.
"""

from __future__ import annotations

import math

from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse

from .. import __version__
from ..errors import DatasetFormatError
from ..netzoo import count_params, resolve_arch
from ..runs import make_longtail, make_subsample, make_synth, run_eval, run_report, run_training
from ..trainer import TrainConfig
from ..verify import run_suite
from . import schemas as S


def _bad_request(request: Request, exc: Exception) -> JSONResponse:
    return JSONResponse(status_code=400, content={"detail": str(exc)})


def create_app() -> FastAPI:
    app = FastAPI(title="polyblocks", version=__version__)
    app.add_exception_handler(ValueError, _bad_request)  # covers Shape/Arch/DatasetFormat
    app.add_exception_handler(OSError, _bad_request)
    app.add_exception_handler(RuntimeError, _bad_request)  # degree/poly probes, divergence

    @app.get("/health", response_model=S.HealthResponse)
    def health() -> S.HealthResponse:
        return S.HealthResponse(status="ok", version=__version__)

    @app.post("/verify", response_model=S.VerifyResponse)
    def verify(req: S.VerifyRequest) -> S.VerifyResponse:
        results = run_suite(req.suite, seed=req.seed)
        checks = [
            S.CheckRow(
                name=r.name,
                passed=r.passed,
                measured=r.measured if math.isfinite(r.measured) else None,
                bound=r.bound,
                detail=r.detail,
            )
            for r in results
        ]
        return S.VerifyResponse(
            suite=req.suite, seed=req.seed, passed=all(r.passed for r in results), checks=checks
        )

    @app.post("/count-params", response_model=S.CountParamsResponse)
    def count(req: S.CountParamsRequest) -> S.CountParamsResponse:
        arch = resolve_arch(req.arch)
        n = count_params(arch)
        return S.CountParamsResponse(name=arch.name, params=n, millions=round(n / 1e6, 1))

    @app.post("/datasets/synth", response_model=S.DatasetInfo)
    def synth(req: S.SynthRequest) -> S.DatasetInfo:
        return S.DatasetInfo(**make_synth(req.d, req.n_per_class, req.seed, req.out))

    @app.post("/datasets/subsample", response_model=S.DatasetInfo)
    def subsample(req: S.SubsampleRequest) -> S.DatasetInfo:
        return S.DatasetInfo(**make_subsample(req.src, req.m, req.seed, req.out))

    @app.post("/datasets/longtail", response_model=S.DatasetInfo)
    def longtail(req: S.LongtailRequest) -> S.DatasetInfo:
        return S.DatasetInfo(**make_longtail(req.src, req.ratio, req.seed, req.out))

    @app.post("/train", response_model=S.TrainResponse)
    def train_endpoint(req: S.TrainRequest) -> S.TrainResponse:
        overrides = {
            key: getattr(req, key)
            for key in ("epochs", "batch", "lr0", "gamma", "momentum", "weight_decay")
            if getattr(req, key) is not None
        }
        if req.milestones is not None:
            overrides["milestones"] = tuple(req.milestones)
        cfg = TrainConfig(seed=req.seed, **overrides)
        out = run_training(
            req.arch, req.data, req.out_dir,
            eval_data_path=req.eval_data, cfg=cfg, repeats=req.repeats,
        )
        return S.TrainResponse(
            label=out["label"],
            runs=[S.RunRow(**vars(r)) for r in out["runs"]],
            mean_eval_acc=out["mean_eval_acc"],
            std_eval_acc=out["std_eval_acc"],
        )

    @app.post("/eval", response_model=S.EvalResponse)
    def eval_endpoint(req: S.EvalRequest) -> S.EvalResponse:
        return S.EvalResponse(**run_eval(req.checkpoint, req.data))

    @app.post("/report", response_model=S.ReportResponse)
    def report(req: S.ReportRequest) -> S.ReportResponse:
        out = run_report(req.runs_dir)
        if not out["rows"]:
            raise DatasetFormatError("no runs to report")
        return S.ReportResponse(rows=[S.ReportRow(**row) for row in out["rows"]], csv=out["csv"])

    return app
