"""HTTP service wrapping the training lab.

Every endpoint is a thin adapter: parse the request, call the library, wrap
the result.  Config-class failures (bad schema, incompatible checkpoint,
invalid scene) map to 400; anything else surfaces as 500.  Long-running work
executes synchronously; desk-scale runs finish in seconds to minutes, so
clients simply disable their read timeout.
"""

from __future__ import annotations

import json
from pathlib import Path

from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse

from .. import __version__
from ..errors import (
    CheckpointError,
    InvalidConfigError,
    InvalidSpecError,
    VidTextError,
    VocabularyError,
)
from ..synth.corpus import CorpusConfig, build_corpus, save_corpus
from ..training.config import RunConfig
from ..training.gradcheck import grad_check
from ..training.loop import evaluate, finetune, pretrain
from ..training.sweep import SweepGrid, sweep
from . import schemas

CONFIG_ERRORS = (InvalidConfigError, InvalidSpecError, CheckpointError, VocabularyError, TypeError)

app = FastAPI(title="vidtext", version=__version__)


@app.exception_handler(VidTextError)
async def domain_error_handler(request: Request, exc: VidTextError):
    status = 400 if isinstance(exc, CONFIG_ERRORS) else 500
    return JSONResponse(status_code=status, content={"detail": str(exc)})


@app.exception_handler(Exception)
async def fallback_error_handler(request: Request, exc: Exception):
    if isinstance(exc, CONFIG_ERRORS):
        return JSONResponse(status_code=400, content={"detail": str(exc)})
    return JSONResponse(status_code=500, content={"detail": f"{type(exc).__name__}: {exc}"})


@app.get("/health", response_model=schemas.HealthResponse)
def health():
    return schemas.HealthResponse(status="ok", version=__version__)


@app.post("/corpus/generate", response_model=schemas.CorpusResponse)
def corpus_generate(request: schemas.CorpusRequest):
    try:
        config = CorpusConfig(**request.config)
    except TypeError as exc:
        raise InvalidConfigError(str(exc)) from None
    corpus = build_corpus(config)
    manifest = save_corpus(corpus, Path(request.out_dir))
    return schemas.CorpusResponse(
        manifest=str(manifest),
        num_clips=len(corpus),
        train_size=len(corpus.train_ids),
        val_size=len(corpus.val_ids),
    )


@app.post("/pretrain", response_model=schemas.RunResponse)
def pretrain_endpoint(request: schemas.PretrainRequest):
    run_cfg = RunConfig.from_dict(request.config)
    result = pretrain(run_cfg, Path(request.out_dir), resume=request.resume)
    return schemas.RunResponse(
        checkpoint=result.checkpoint_dir,
        log=result.log_path,
        steps=result.steps,
        final_report=result.final_report,
        config_hash=result.config_hash,
    )


@app.post("/finetune", response_model=schemas.RunResponse)
def finetune_endpoint(request: schemas.FinetuneRequest):
    run_cfg = RunConfig.from_dict(request.config)
    result = finetune(Path(request.checkpoint), request.task, run_cfg, Path(request.out_dir))
    return schemas.RunResponse(
        checkpoint=result.checkpoint_dir,
        log=result.log_path,
        steps=result.steps,
        final_report=result.final_report,
        config_hash=result.config_hash,
    )


@app.post("/evaluate", response_model=schemas.MetricsResponse)
def evaluate_endpoint(request: schemas.EvaluateRequest):
    run_cfg = RunConfig.from_dict(request.config)
    row = evaluate(Path(request.checkpoint), request.task, request.split, run_cfg)
    if request.out_dir:
        out = Path(request.out_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / f"metrics_{request.task}_{request.split}.json").write_text(json.dumps(row, indent=2))
    return schemas.MetricsResponse(**row)


@app.post("/gradcheck", response_model=schemas.GradCheckResponse)
def gradcheck_endpoint(request: schemas.GradCheckRequest):
    report = grad_check(seed=request.seed, coords_per_param=request.coords_per_param)
    return schemas.GradCheckResponse(
        losses=report["losses"],
        max_rel_err=report["max_rel_err"],
        runtime_s=report["runtime_s"],
        coords_per_param=report["coords_per_param"],
        fd_step=report["fd_step"],
    )


@app.post("/sweep", response_model=schemas.SweepResponse)
def sweep_endpoint(request: schemas.SweepRequest):
    base = RunConfig.from_dict(request.config)
    grid_kwargs = {}
    if request.targets is not None:
        grid_kwargs["targets"] = tuple(tuple(t) if t is not None else None for t in request.targets)
    if request.masking is not None:
        grid_kwargs["masking"] = tuple(tuple(m) for m in request.masking)
    if request.ratios is not None:
        grid_kwargs["ratios"] = tuple(request.ratios)
    if request.loss_kinds is not None:
        grid_kwargs["loss_kinds"] = tuple(request.loss_kinds)
    if request.head_kinds is not None:
        grid_kwargs["head_kinds"] = tuple(request.head_kinds)
    table = sweep(SweepGrid(base=base, **grid_kwargs), Path(request.out_dir))
    return schemas.SweepResponse(
        columns=table.columns, rows=table.rows, table=table.render(), out_dir=request.out_dir
    )
