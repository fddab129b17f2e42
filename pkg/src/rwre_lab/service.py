"""FastAPI service wrapping the lab.

Endpoints mirror the CLI subcommands; request and response bodies are the
pydantic models from harness, so files written from a server response are
byte-identical to a local run with the same config.
"""

from __future__ import annotations

from fastapi import FastAPI, HTTPException
from pydantic import BaseModel

from . import spectrum as spectrum_mod
from .env import ModelError
from .harness import (
    AuditReport,
    ExperimentConfig,
    ModelSpec,
    ScalingResult,
    SpectrumReportModel,
    run_experiment,
    run_genfn_audit,
)

app = FastAPI(title="rwre-lab", version="0.1.0")

_KIND_BY_PATH = {
    "walk-exponent": "WALK_EXPONENT",
    "hitting-exponent": "HITTING_EXPONENT",
    "zsum-exponent": "ZSUM_EXPONENT",
}


class SpectrumRequest(BaseModel):
    model_config = {"protected_namespaces": ()}

    model_spec: ModelSpec
    speed_depth: int = 2000
    speed_replicas: int = 400


@app.get("/healthz")
def healthz():
    return {"status": "ok"}


@app.post("/spectrum", response_model=SpectrumReportModel)
def spectrum_endpoint(req: SpectrumRequest) -> SpectrumReportModel:
    try:
        model = req.model_spec.to_model()
        report = spectrum_mod.spectrum_report(
            model, speed_depth=req.speed_depth, speed_replicas=req.speed_replicas)
    except (ModelError, ValueError) as exc:
        raise HTTPException(status_code=400, detail=str(exc))
    return SpectrumReportModel.from_report(report)


@app.post("/experiments/{kind}", response_model=ScalingResult)
def experiment_endpoint(kind: str, config: ExperimentConfig) -> ScalingResult:
    if kind not in _KIND_BY_PATH:
        raise HTTPException(status_code=404, detail=f"unknown experiment {kind!r}")
    config = config.model_copy(update={"experiment": _KIND_BY_PATH[kind]})
    try:
        return run_experiment(config)
    except (ModelError, ValueError) as exc:
        raise HTTPException(status_code=400, detail=str(exc))


@app.post("/genfn-audit", response_model=AuditReport)
def genfn_audit_endpoint(config: ExperimentConfig) -> AuditReport:
    config = config.model_copy(update={"experiment": "GENFN_AUDIT"})
    try:
        return run_genfn_audit(config)
    except (ModelError, ValueError) as exc:
        raise HTTPException(status_code=400, detail=str(exc))
