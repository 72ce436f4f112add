"""HTTP service wrapping the experiment runners.

The CLI is a thin client of these endpoints; they can also be served
standalone with uvicorn for multi-client use.
"""

from __future__ import annotations

from fastapi import FastAPI
from fastapi.responses import JSONResponse

from ..config import load_experiment_config
from ..errors import ModnormError
from ..runner import cmd_gap, cmd_generate, cmd_report, cmd_train
from .schemas import (CommandRequest, GapResponse, GenerateResponse,
                      ReportRequest, ReportResponse, StagePoint, TrainResponse)

app = FastAPI(title="modnorm", description="Per-modality batch normalization experiments")


@app.exception_handler(ModnormError)
async def modnorm_error_handler(request, exc: ModnormError):
    return JSONResponse(status_code=400,
                        content={"error_kind": type(exc).__name__, "message": str(exc)})


def _config_from(req: CommandRequest):
    return load_experiment_config(
        path=req.config_path, text=req.config_text,
        dataset_seed=req.dataset_seed,
        seeds=tuple(req.seeds) if req.seeds else None,
        out_dir=req.out_dir,
        norm_backbone=req.norm_backbone, norm_head=req.norm_head)


@app.get("/health")
def health():
    return {"status": "ok"}


@app.post("/api/generate", response_model=GenerateResponse)
def generate(req: CommandRequest):
    return cmd_generate(_config_from(req))


@app.post("/api/train", response_model=TrainResponse)
def train(req: CommandRequest):
    result = cmd_train(_config_from(req))
    return {"files": result["files"], "summary": result["summary"]}


@app.post("/api/gap", response_model=GapResponse)
def gap(req: CommandRequest):
    result = cmd_gap(_config_from(req))
    return {
        "files": result["files"],
        "stage_trace_bn": [StagePoint(stage=s, gap=g) for s, g in result["stage_trace_bn"]],
        "stage_trace_mbn": [StagePoint(stage=s, gap=g) for s, g in result["stage_trace_mbn"]],
    }


@app.post("/api/report", response_model=ReportResponse)
def report(req: ReportRequest):
    return cmd_report(req.out_dir)
