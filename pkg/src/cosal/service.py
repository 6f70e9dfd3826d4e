"""HTTP service over the engine.

Every operation is a handler on a pydantic request model; the FastAPI app and
the CLI are two thin skins over the same handlers, so a scoring box can serve
many clients while scripts keep working offline.

Requests carry server-local filesystem roots: the service is meant to sit on
the machine that holds the datasets.
"""

from __future__ import annotations

from dataclasses import asdict

from fastapi import FastAPI, HTTPException
from pydantic import BaseModel, Field

from . import __version__
from .bench import (
    aggregate,
    emit,
    emit_pr_data,
    evaluate_model,
    report_to_dict,
    run_coattention_tree,
    run_pipeline_tree,
)
from .core import CosalError
from .dataset import compute_stats, load_dataset


class EvalRequest(BaseModel):
    gt_root: str
    pred_root: str
    model: str = "model"
    dataset: str | None = None
    format: str = Field(default="csv", pattern="^(csv|json|md|markdown)$")
    workers: int | None = None


class EvalResponse(BaseModel):
    content: str
    report: dict
    warnings: list[str]
    validation_failures: bool


class StatsRequest(BaseModel):
    dataset_root: str


class StatsResponse(BaseModel):
    stats: dict
    issues: list[dict]
    validation_failures: bool


class CoattnRequest(BaseModel):
    features_root: str
    out_root: str
    eigvecs: int = Field(default=1, ge=1)
    workers: int | None = None


class PipelineRequest(BaseModel):
    features_root: str
    priors_root: str
    out_root: str
    alpha: float = Field(default=0.99, gt=0.0, lt=1.0)
    refiner: str = Field(default="ranking", pattern="^(ranking|identity)$")
    workers: int | None = None


class TreeRunResponse(BaseModel):
    report: dict
    validation_failures: bool


class PrDataRequest(BaseModel):
    gt_root: str
    pred_root: str
    model: str = "model"
    dataset: str | None = None
    workers: int | None = None


class PrDataResponse(BaseModel):
    content: str
    warnings: list[str]
    validation_failures: bool


def handle_eval(req: EvalRequest) -> EvalResponse:
    index = load_dataset(req.gt_root)
    result = evaluate_model(req.pred_root, index, req.model, req.dataset, req.workers)
    warnings = list(result.warnings)
    if index.issues:
        warnings.append(f"dataset validation issues: {len(index.issues)}")
    report = aggregate(result.records, warnings=warnings)
    return EvalResponse(
        content=emit(report, "markdown" if req.format == "md" else req.format).decode(),
        report=report_to_dict(report),
        warnings=warnings,
        validation_failures=bool(warnings),
    )


def handle_stats(req: StatsRequest) -> StatsResponse:
    index = load_dataset(req.dataset_root)
    stats = compute_stats(index)
    return StatsResponse(
        stats=asdict(stats),
        issues=[asdict(i) for i in index.issues],
        validation_failures=bool(index.issues),
    )


def handle_coattn(req: CoattnRequest) -> TreeRunResponse:
    report = run_coattention_tree(req.features_root, req.out_root, req.eigvecs, req.workers)
    return TreeRunResponse(report=report, validation_failures=bool(report["errors"]))


def handle_pipeline(req: PipelineRequest) -> TreeRunResponse:
    report = run_pipeline_tree(
        req.features_root, req.priors_root, req.out_root,
        alpha=req.alpha, refiner=req.refiner, workers=req.workers,
    )
    return TreeRunResponse(report=report, validation_failures=bool(report["errors"]))


def handle_prdata(req: PrDataRequest) -> PrDataResponse:
    index = load_dataset(req.gt_root)
    result = evaluate_model(req.pred_root, index, req.model, req.dataset, req.workers)
    return PrDataResponse(
        content=emit_pr_data(result.records).decode(),
        warnings=result.warnings,
        validation_failures=bool(result.warnings or index.issues),
    )


app = FastAPI(title="cosal", version=__version__,
              description="Co-salient object detection engine and benchmark service")


def _wrap(handler, request):
    try:
        return handler(request)
    except CosalError as exc:
        raise HTTPException(status_code=422, detail=str(exc)) from exc
    except (FileNotFoundError, NotADirectoryError, ValueError) as exc:
        raise HTTPException(status_code=422, detail=str(exc)) from exc


@app.get("/healthz")
def healthz():
    return {"status": "ok", "version": __version__}


@app.post("/eval", response_model=EvalResponse)
def eval_endpoint(request: EvalRequest):
    return _wrap(handle_eval, request)


@app.post("/stats", response_model=StatsResponse)
def stats_endpoint(request: StatsRequest):
    return _wrap(handle_stats, request)


@app.post("/coattn", response_model=TreeRunResponse)
def coattn_endpoint(request: CoattnRequest):
    return _wrap(handle_coattn, request)


@app.post("/pipeline", response_model=TreeRunResponse)
def pipeline_endpoint(request: PipelineRequest):
    return _wrap(handle_pipeline, request)


@app.post("/prdata", response_model=PrDataResponse)
def prdata_endpoint(request: PrDataRequest):
    return _wrap(handle_prdata, request)
