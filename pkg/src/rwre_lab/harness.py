"""Experiment orchestration: scaling runs, genfn audit, CSV/JSON emission.

Every experiment is a pure function of (config, master seed).  Replica seeds
are derived as a keyed function of (seed, experiment, size, replica), so the
same rows come back regardless of worker count or scheduling, and partial
reruns reproduce exact subsets.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, List, Literal, Optional, Tuple

import numpy as np
from pydantic import BaseModel, Field, field_validator, model_validator

from . import branching, spectrum, walk
from .env import (
    IID_DISCRETE,
    IID_TWO_POINT,
    MARKOV_FINITE,
    EnvironmentModel,
    EnvironmentRealization,
    make_iid_discrete,
    make_iid_two_point,
    make_markov_finite,
)
from .prng import stream_key

WALK_EXPONENT = "WALK_EXPONENT"
HITTING_EXPONENT = "HITTING_EXPONENT"
ZSUM_EXPONENT = "ZSUM_EXPONENT"
SPECTRUM = "SPECTRUM"
GENFN_AUDIT = "GENFN_AUDIT"


class ModelSpec(BaseModel):
    """JSON-facing model description; see to_model() for validation."""

    kind: Literal["IID_TWO_POINT", "IID_DISCRETE", "MARKOV_FINITE"]
    omega_states: List[float]
    weights: Optional[List[float]] = None
    transition: Optional[List[List[float]]] = None
    seed: int = 0
    admissibility: Literal["require", "skip"] = "require"

    def to_model(self) -> EnvironmentModel:
        check = self.admissibility == "require"
        if self.kind == MARKOV_FINITE:
            if self.transition is None:
                raise ValueError("MARKOV_FINITE requires a transition matrix")
            return make_markov_finite(self.omega_states, self.transition, self.seed,
                                      check_admissibility=check)
        if self.weights is None:
            raise ValueError(f"{self.kind} requires weights")
        if self.kind == IID_TWO_POINT:
            if len(self.omega_states) != 2:
                raise ValueError("IID_TWO_POINT takes exactly two omega states")
            return make_iid_two_point(self.omega_states[0], self.omega_states[1],
                                      q=self.weights[1], master_seed=self.seed,
                                      check_admissibility=check)
        return make_iid_discrete(self.omega_states, self.weights, self.seed,
                                 check_admissibility=check)


class ExperimentConfig(BaseModel):
    model_spec: ModelSpec = Field(alias="model")
    experiment: Optional[Literal["WALK_EXPONENT", "HITTING_EXPONENT", "ZSUM_EXPONENT",
                                 "SPECTRUM", "GENFN_AUDIT"]] = None
    sizes: List[int] = Field(default_factory=list)
    replicas: int = 1
    seed: int = 0
    workers: int = 1
    step_cap_safety: int = 100
    audit_cases: int = 1000

    model_config = {"populate_by_name": True, "protected_namespaces": ()}

    @field_validator("replicas", "workers", "audit_cases")
    @classmethod
    def _positive(cls, v, info):
        if v < 1:
            raise ValueError(f"{info.field_name} must be >= 1")
        return v

    @model_validator(mode="after")
    def _sizes_increasing(self):
        if any(b <= a for a, b in zip(self.sizes, self.sizes[1:])):
            raise ValueError("size grid must be strictly increasing")
        if self.experiment in (WALK_EXPONENT, HITTING_EXPONENT, ZSUM_EXPONENT) and not self.sizes:
            raise ValueError(f"{self.experiment} requires a size grid")
        return self


class Row(BaseModel):
    size: int
    replica: int
    statistic: float
    flag: str = ""


class SizeSummary(BaseModel):
    size: int
    median: float
    q1: float
    q3: float
    n_used: int
    n_flagged: int


class ScalingResult(BaseModel):
    model_config = {"protected_namespaces": ()}

    experiment: str
    model_id: str
    seed: int
    rows: List[Row]
    summary: List[SizeSummary]
    slope: Optional[float] = None
    slope_stderr: Optional[float] = None
    note: str = ""


_EXCLUDED_FLAGS = {"capped", "overflow"}


def _summarize(experiment: str, model_id: str, seed: int, rows: List[Row]) -> ScalingResult:
    summary = []
    sizes = sorted({r.size for r in rows})
    for n in sizes:
        stats = [r.statistic for r in rows if r.size == n and r.flag not in _EXCLUDED_FLAGS]
        flagged = sum(1 for r in rows if r.size == n and r.flag)
        if stats:
            arr = np.asarray(stats)
            summary.append(SizeSummary(size=n, median=float(np.median(arr)),
                                       q1=float(np.percentile(arr, 25)),
                                       q3=float(np.percentile(arr, 75)),
                                       n_used=len(stats), n_flagged=flagged))
        else:
            summary.append(SizeSummary(size=n, median=math.nan, q1=math.nan,
                                       q3=math.nan, n_used=0, n_flagged=flagged))
    slope, stderr, note = _fit_slope(summary)
    return ScalingResult(experiment=experiment, model_id=model_id, seed=seed,
                         rows=rows, summary=summary, slope=slope,
                         slope_stderr=stderr, note=note)


def _fit_slope(summary: List[SizeSummary]):
    """Regress median(log statistic_raw) = median_stat * log n against log n.

    The per-row statistics are already log-ratios, so median*log n recovers
    the median of the log raw quantity exactly (medians commute with the
    monotone rescaling).
    """
    pts = [(math.log(s.size), s.median * math.log(s.size))
           for s in summary if s.n_used > 0 and math.isfinite(s.median)]
    if len(pts) < 2:
        return None, None, "insufficient grid"
    x = np.array([p[0] for p in pts])
    y = np.array([p[1] for p in pts])
    xm = x - x.mean()
    slope = float(np.dot(xm, y) / np.dot(xm, xm))
    intercept = float(y.mean() - slope * x.mean())
    resid = y - (slope * x + intercept)
    if len(pts) > 2:
        se = float(math.sqrt(np.dot(resid, resid) / (len(pts) - 2) / np.dot(xm, xm)))
    else:
        se = math.inf
    note = "low-confidence: grid of length 2" if len(pts) == 2 else ""
    return slope, se, note


def _replica_map(fn: Callable[[int, int, int], Row], jobs: List[Tuple[int, int]],
                 workers: int) -> List[Row]:
    """Run fn(size, replica, job_index) over jobs, canonical order regardless
    of worker count."""
    out: List[Optional[Row]] = [None] * len(jobs)

    def run(idx: int):
        size, rep = jobs[idx]
        out[idx] = fn(size, rep, idx)

    if workers <= 1:
        for i in range(len(jobs)):
            run(i)
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            list(pool.map(run, range(len(jobs))))
    return out  # type: ignore[return-value]


def run_walk_exponent(config: ExperimentConfig) -> ScalingResult:
    model = config.model_spec.to_model()
    jobs = [(n, r) for n in config.sizes for r in range(config.replicas)]

    def one(n: int, r: int, _idx: int) -> Row:
        rep_seed = stream_key(config.seed, "walk_exponent", n, r)
        realization = EnvironmentRealization(model, seed=stream_key(rep_seed, "envdraw"))
        summary = walk.run_to_time(realization, n, seed=rep_seed)
        x = summary.position
        stat = math.log(max(x, 1)) / math.log(n)
        return Row(size=n, replica=r, statistic=stat, flag="nonpos" if x <= 0 else "")

    rows = _replica_map(one, jobs, config.workers)
    return _summarize(WALK_EXPONENT, model.model_id(), config.seed, rows)


def _kappa_hat(model: EnvironmentModel) -> float:
    if not model.admissibility_checked:
        return 1.0
    try:
        return float(spectrum.kappa_root(model))
    except ValueError:
        return 1.0


def run_hitting_exponent(config: ExperimentConfig) -> ScalingResult:
    model = config.model_spec.to_model()
    kappa_hat = _kappa_hat(model)
    jobs = [(n, r) for n in config.sizes for r in range(config.replicas)]

    def one(target: int, r: int, _idx: int) -> Row:
        rep_seed = stream_key(config.seed, "hitting_exponent", target, r)
        realization = EnvironmentRealization(model, seed=stream_key(rep_seed, "envdraw"))
        cap = walk.default_step_cap(target, kappa_hat, safety=config.step_cap_safety)
        record = walk.hitting_time(realization, target, cap, seed=rep_seed)
        if record.capped:
            stat = math.log(record.steps_taken) / math.log(target)
            return Row(size=target, replica=r, statistic=stat, flag="capped")
        stat = math.log(record.hitting_time) / math.log(target)
        return Row(size=target, replica=r, statistic=stat, flag="")

    rows = _replica_map(one, jobs, config.workers)
    return _summarize(HITTING_EXPONENT, model.model_id(), config.seed, rows)


def run_zsum_exponent(config: ExperimentConfig) -> ScalingResult:
    model = config.model_spec.to_model()
    rows: List[Row] = []
    for n in config.sizes:
        totals, flags = branching.sample_zsum_batch(
            model, n, config.replicas, seed=stream_key(config.seed, "zsum_exponent", n))
        logn = math.log(n)
        for r in range(config.replicas):
            stat = math.log1p(float(totals[r])) / logn
            rows.append(Row(size=n, replica=r, statistic=stat,
                            flag="overflow" if flags[r] else ""))
    return _summarize(ZSUM_EXPONENT, model.model_id(), config.seed, rows)


class AuditReport(BaseModel):
    cases: int
    failures: int
    worst_phi_rel: float
    worst_recursion_rel: float
    counterexample: str = ""
    passed: bool = True


_AUDIT_S_GRID = tuple(round(0.1 * k, 10) for k in range(10))  # 0.0 .. 0.9


def run_genfn_audit(config: ExperimentConfig,
                    phi_fn=branching.phi_product,
                    logb_fn=branching.log_b,
                    b_direct_fn=branching.b_direct) -> AuditReport:
    """Randomized audit of the generating-function identities.

    Checks, per case: phi_n(s) * B_n(s) = 1 (reciprocal identity), agreement
    of the three-term and summed B recursions, and strict growth of log B in
    n for s < 1.  Injection points (phi_fn etc.) exist for mutation tests.
    """
    model = config.model_spec.to_model()
    rng = np.random.default_rng(config.seed)
    failures = 0
    worst_phi = 0.0
    worst_rec = 0.0
    counterexample = ""
    for case in range(config.audit_cases):
        n = int(rng.integers(1, 101))
        s = float(_AUDIT_S_GRID[int(rng.integers(len(_AUDIT_S_GRID)))])
        env_seed = stream_key(config.seed, "audit_env", case)
        realization = EnvironmentRealization(model, seed=env_seed)
        bad = []

        phi = phi_fn(realization, n, s)
        lb = logb_fn(realization, n, s)
        phi_rel = abs(phi * math.exp(lb) - 1.0)
        worst_phi = max(worst_phi, phi_rel)
        if phi_rel > 1e-10:
            bad.append(f"phi*B-1 = {phi_rel:.3e}")

        rho_prefix = realization.rho_window(0, n).tolist()
        b_rec, b_sum = b_direct_fn(rho_prefix, n, s)
        rec_rel = abs(b_rec - b_sum) / max(abs(b_rec), 1.0)
        worst_rec = max(worst_rec, rec_rel)
        if rec_rel > 1e-11:
            bad.append(f"rec-vs-sum gap = {rec_rel:.3e}")

        if s < 1.0 and n >= 1 and not logb_fn(realization, n, s) > (logb_fn(realization, n - 1, s) if n > 1 else 0.0):
            bad.append("log B not strictly increasing in n")

        if bad:
            failures += 1
            if not counterexample:
                counterexample = f"case {case}: n={n}, s={s}, env_seed={env_seed}: " + "; ".join(bad)
    return AuditReport(cases=config.audit_cases, failures=failures,
                       worst_phi_rel=worst_phi, worst_recursion_rel=worst_rec,
                       counterexample=counterexample, passed=failures == 0)


def run_experiment(config: ExperimentConfig):
    if config.experiment == WALK_EXPONENT:
        return run_walk_exponent(config)
    if config.experiment == HITTING_EXPONENT:
        return run_hitting_exponent(config)
    if config.experiment == ZSUM_EXPONENT:
        return run_zsum_exponent(config)
    if config.experiment == GENFN_AUDIT:
        return run_genfn_audit(config)
    if config.experiment == SPECTRUM:
        return spectrum.spectrum_report(config.model_spec.to_model())
    raise ValueError(f"no experiment selected (got {config.experiment!r})")


# -- emission -----------------------------------------------------------------

CSV_HEADER = "experiment,model_id,size,replica,statistic,flag"


def emit(result: ScalingResult, fmt: str, path) -> None:
    """Write a ScalingResult; identical inputs yield byte-identical files."""
    try:
        if fmt == "csv":
            lines = [CSV_HEADER]
            for row in result.rows:
                lines.append(f"{result.experiment},{result.model_id},{row.size},"
                             f"{row.replica},{row.statistic!r},{row.flag}")
            _write_text(path, "\n".join(lines) + "\n")
        elif fmt == "json":
            _write_text(path, result.model_dump_json(indent=2) + "\n")
        else:
            raise ValueError(f"unknown format {fmt!r}")
    except OSError as exc:
        raise OSError(f"failed writing {path}: {exc}") from exc


def _write_text(path, text: str) -> None:
    with open(path, "w", newline="\n") as fh:
        fh.write(text)


class SpeedModel(BaseModel):
    mean_r: float
    tail_relative: float
    diverged: bool
    speed: float
    replicas: int
    truncation_depth: int


class SpectrumReportModel(BaseModel):
    """JSON mirror of spectrum.SpectrumReport."""

    model_config = {"protected_namespaces": ()}

    model_id: str
    lambda_grid: List[Tuple[float, float]]
    kappa_root: float
    kappa_root_at_boundary: bool
    kappa_via_rate: float
    rate_grid: List[Tuple[float, float]]
    speed: SpeedModel
    negative_lambda_witness: Optional[float] = None

    @classmethod
    def from_report(cls, rep: spectrum.SpectrumReport) -> "SpectrumReportModel":
        finite_rate = [(x, j if math.isfinite(j) else math.nan) for x, j in rep.rate_grid]
        return cls(model_id=rep.model_id, lambda_grid=rep.lambda_grid,
                   kappa_root=rep.kappa_root,
                   kappa_root_at_boundary=rep.kappa_root_at_boundary,
                   kappa_via_rate=rep.kappa_via_rate, rate_grid=finite_rate,
                   speed=SpeedModel(**rep.speed.__dict__),
                   negative_lambda_witness=rep.negative_lambda_witness)


def emit_spectrum(report: "SpectrumReportModel", out_dir) -> None:
    """Write spectrum.json plus the (lambda, Lambda) and (x, J) CSV grids."""
    from pathlib import Path

    out = Path(out_dir)
    try:
        _write_text(out / "spectrum.json", report.model_dump_json(indent=2) + "\n")
        lines = ["lambda,Lambda"]
        lines += [f"{l!r},{v!r}" for l, v in report.lambda_grid]
        _write_text(out / "lambda_grid.csv", "\n".join(lines) + "\n")
        lines = ["x,J"]
        lines += [f"{x!r},{'inf' if not math.isfinite(j) else repr(j)}" for x, j in report.rate_grid]
        _write_text(out / "rate_grid.csv", "\n".join(lines) + "\n")
    except OSError as exc:
        raise OSError(f"failed writing spectrum outputs under {out}: {exc}") from exc
