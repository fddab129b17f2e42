"""Experiment harness: config validation, determinism, summaries, emission."""

import json
import math

import numpy as np
import pytest
from pydantic import ValidationError

from rwre_lab import branching, harness
from rwre_lab.harness import (
    AuditReport,
    ExperimentConfig,
    ModelSpec,
    ScalingResult,
    SpectrumReportModel,
    emit,
    emit_spectrum,
    run_experiment,
    run_genfn_audit,
    run_hitting_exponent,
    run_walk_exponent,
    run_zsum_exponent,
)
from rwre_lab import spectrum


TWO_POINT_SPEC = ModelSpec(kind="IID_TWO_POINT", omega_states=[2 / 3, 1 / 3],
                           weights=[0.6, 0.4], seed=42)
MARKOV_SPEC = ModelSpec(kind="MARKOV_FINITE", omega_states=[1 / 3, 2 / 3],
                        transition=[[0.4, 0.6], [0.3, 0.7]], seed=43)


def _cfg(**kw):
    base = dict(model=TWO_POINT_SPEC, sizes=[64, 128, 256], replicas=20,
                seed=7, workers=1)
    base.update(kw)
    return ExperimentConfig(**base)


# -- config validation -----------------------------------------------------------


def test_model_spec_round_trips_from_json():
    raw = json.dumps({"kind": "IID_TWO_POINT", "omega_states": [2 / 3, 1 / 3],
                      "weights": [0.6, 0.4], "seed": 42})
    spec = ModelSpec.model_validate_json(raw)
    assert spec.to_model().model_id() == TWO_POINT_SPEC.to_model().model_id()


def test_model_spec_validation_errors():
    with pytest.raises(ValueError, match="transition"):
        ModelSpec(kind="MARKOV_FINITE", omega_states=[0.3, 0.6]).to_model()
    with pytest.raises(ValueError, match="weights"):
        ModelSpec(kind="IID_DISCRETE", omega_states=[0.3, 0.6]).to_model()
    with pytest.raises(ValueError, match="two omega states"):
        ModelSpec(kind="IID_TWO_POINT", omega_states=[0.3, 0.6, 0.9],
                  weights=[0.3, 0.3, 0.4]).to_model()
    with pytest.raises(ValidationError):
        ModelSpec(kind="UNKNOWN", omega_states=[0.5])


def test_model_spec_admissibility_skip():
    spec = ModelSpec(kind="IID_TWO_POINT", omega_states=[2 / 3, 1 / 3],
                     weights=[0.8, 0.2], seed=0, admissibility="skip")
    model = spec.to_model()
    assert not model.admissibility_checked
    with pytest.raises(ValueError):
        ModelSpec(kind="IID_TWO_POINT", omega_states=[2 / 3, 1 / 3],
                  weights=[0.8, 0.2], seed=0).to_model()


def test_config_rejects_nonincreasing_sizes():
    with pytest.raises(ValidationError, match="strictly increasing"):
        _cfg(sizes=[256, 128])
    with pytest.raises(ValidationError, match="strictly increasing"):
        _cfg(sizes=[64, 64])


def test_config_rejects_nonpositive_counts():
    with pytest.raises(ValidationError):
        _cfg(replicas=0)
    with pytest.raises(ValidationError):
        _cfg(workers=0)


def test_config_requires_sizes_for_scaling_experiments():
    with pytest.raises(ValidationError, match="size grid"):
        _cfg(sizes=[], experiment="ZSUM_EXPONENT")
    # audit needs no grid
    ExperimentConfig(model=TWO_POINT_SPEC, experiment="GENFN_AUDIT", audit_cases=5)


# -- experiments -----------------------------------------------------------------


def test_walk_exponent_shape_and_determinism():
    cfg = _cfg(experiment="WALK_EXPONENT")
    res = run_walk_exponent(cfg)
    assert res.experiment == "WALK_EXPONENT"
    assert len(res.rows) == 3 * 20
    assert [s.size for s in res.summary] == [64, 128, 256]
    again = run_walk_exponent(_cfg(experiment="WALK_EXPONENT", workers=4))
    assert res == again


def test_hitting_exponent_rows_and_caps():
    cfg = _cfg(experiment="HITTING_EXPONENT", sizes=[16, 32], replicas=30,
               step_cap_safety=1)
    res = run_hitting_exponent(cfg)
    assert len(res.rows) == 2 * 30
    for row in res.rows:
        assert row.flag in ("", "capped")
        assert row.statistic > 0
    # capped rows are excluded from the medians but reported in the counts
    for s in res.summary:
        flagged = sum(1 for r in res.rows if r.size == s.size and r.flag)
        assert s.n_flagged == flagged
        assert s.n_used == 30 - sum(
            1 for r in res.rows if r.size == s.size and r.flag in harness._EXCLUDED_FLAGS)


def test_zsum_exponent_determinism_across_workers():
    a = run_zsum_exponent(_cfg(experiment="ZSUM_EXPONENT", workers=1))
    b = run_zsum_exponent(_cfg(experiment="ZSUM_EXPONENT", workers=8))
    assert a == b
    assert a.slope is not None and a.slope_stderr is not None


def test_summary_medians_recompute():
    res = run_zsum_exponent(_cfg(experiment="ZSUM_EXPONENT"))
    for s in res.summary:
        stats = [r.statistic for r in res.rows
                 if r.size == s.size and r.flag not in harness._EXCLUDED_FLAGS]
        assert s.median == pytest.approx(float(np.median(stats)))
        assert s.q1 == pytest.approx(float(np.percentile(stats, 25)))


def test_slope_grid_edge_cases():
    res = run_zsum_exponent(_cfg(experiment="ZSUM_EXPONENT", sizes=[128]))
    assert res.slope is None and res.note == "insufficient grid"
    res = run_zsum_exponent(_cfg(experiment="ZSUM_EXPONENT", sizes=[128, 256]))
    assert res.slope is not None
    assert "low-confidence" in res.note


def test_run_experiment_dispatch_and_errors():
    res = run_experiment(_cfg(experiment="ZSUM_EXPONENT"))
    assert isinstance(res, ScalingResult)
    rep = run_experiment(ExperimentConfig(model=TWO_POINT_SPEC, experiment="SPECTRUM"))
    assert isinstance(rep, spectrum.SpectrumReport)
    with pytest.raises(ValueError, match="no experiment"):
        run_experiment(_cfg())


def test_markov_experiment_runs():
    cfg = ExperimentConfig(model=MARKOV_SPEC, experiment="ZSUM_EXPONENT",
                           sizes=[32, 64], replicas=10, seed=3)
    res = run_zsum_exponent(cfg)
    assert len(res.rows) == 20
    assert res.model_id == MARKOV_SPEC.to_model().model_id()


# -- genfn audit -----------------------------------------------------------------


def test_genfn_audit_clean():
    cfg = ExperimentConfig(model=TWO_POINT_SPEC, experiment="GENFN_AUDIT",
                           audit_cases=100, seed=5)
    rep = run_genfn_audit(cfg)
    assert rep.passed and rep.failures == 0
    assert rep.worst_phi_rel <= 1e-10
    assert rep.worst_recursion_rel <= 1e-11
    assert rep.counterexample == ""


def test_genfn_audit_catches_mutations():
    cfg = ExperimentConfig(model=TWO_POINT_SPEC, experiment="GENFN_AUDIT",
                           audit_cases=25, seed=5)
    # sign flip in phi
    rep = run_genfn_audit(cfg, phi_fn=lambda r, n, s: -branching.phi_product(r, n, s))
    assert not rep.passed and rep.failures == 25
    assert "phi" in rep.counterexample
    # perturbed three-term recursion
    def bad_b(rho, n, s):
        rec, summed = branching.b_direct(rho, n, s)
        return rec * (1.0 + 1e-8), summed
    rep = run_genfn_audit(cfg, b_direct_fn=bad_b)
    assert not rep.passed
    assert "rec-vs-sum" in rep.counterexample
    # broken monotonicity via a constant log B
    rep = run_genfn_audit(cfg, logb_fn=lambda r, n, s: 0.0)
    assert not rep.passed


# -- emission --------------------------------------------------------------------


def test_emit_csv_byte_identical(tmp_path):
    res = run_zsum_exponent(_cfg(experiment="ZSUM_EXPONENT"))
    p1, p2 = tmp_path / "a.csv", tmp_path / "b.csv"
    emit(res, "csv", p1)
    emit(res, "csv", p2)
    data = p1.read_bytes()
    assert data == p2.read_bytes()
    lines = data.decode().splitlines()
    assert lines[0] == harness.CSV_HEADER
    assert len(lines) == 1 + len(res.rows)
    # repr round trip: the statistic column reparses to the exact float
    first = lines[1].split(",")
    assert float(first[4]) == res.rows[0].statistic


def test_emit_json_round_trip(tmp_path):
    res = run_zsum_exponent(_cfg(experiment="ZSUM_EXPONENT"))
    path = tmp_path / "r.json"
    emit(res, "json", path)
    back = ScalingResult.model_validate_json(path.read_text())
    assert back.model_dump() == res.model_dump()
    with pytest.raises(ValueError, match="unknown format"):
        emit(res, "parquet", tmp_path / "r.parquet")


def test_emit_io_error_names_path(tmp_path):
    res = run_zsum_exponent(_cfg(experiment="ZSUM_EXPONENT"))
    bad = tmp_path / "missing_dir" / "r.csv"
    with pytest.raises(OSError, match="missing_dir"):
        emit(res, "csv", bad)


def test_emit_spectrum_files(tmp_path, two_point_model):
    rep = spectrum.spectrum_report(two_point_model, speed_depth=200, speed_replicas=50)
    model = SpectrumReportModel.from_report(rep)
    emit_spectrum(model, tmp_path)
    names = {p.name for p in tmp_path.iterdir()}
    assert names == {"spectrum.json", "lambda_grid.csv", "rate_grid.csv"}
    blob = json.loads((tmp_path / "spectrum.json").read_text())
    assert blob["kappa_root"] == pytest.approx(math.log2(1.5), abs=1e-10)
    rate_lines = (tmp_path / "rate_grid.csv").read_text().splitlines()
    assert rate_lines[0] == "x,J"
    # out-of-range J values are spelled "inf" in the CSV
    assert any(line.endswith(",inf") for line in rate_lines[1:]) or all(
        math.isfinite(float(l.split(",")[1])) for l in rate_lines[1:])
    # byte-identical rerun
    before = (tmp_path / "spectrum.json").read_bytes()
    emit_spectrum(model, tmp_path)
    assert (tmp_path / "spectrum.json").read_bytes() == before
