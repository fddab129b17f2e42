"""Command-line entry point.

Subcommands: spectrum, walk-exponent, hitting-exponent, zsum-exponent,
genfn-audit.  Each takes --config <path.json> plus overrides; with --server
the run is delegated to a running rwre-lab service and the response is
written through the same emitters, so files match a local run byte for byte.

Exit codes: 0 success, 1 config/IO error, 2 invariant breach.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from pydantic import ValidationError

from . import spectrum as spectrum_mod
from .env import ModelError
from .harness import (
    AuditReport,
    ExperimentConfig,
    ScalingResult,
    SpectrumReportModel,
    emit,
    emit_spectrum,
    run_experiment,
)

_EXPERIMENT_BY_COMMAND = {
    "spectrum": "SPECTRUM",
    "walk-exponent": "WALK_EXPONENT",
    "hitting-exponent": "HITTING_EXPONENT",
    "zsum-exponent": "ZSUM_EXPONENT",
    "genfn-audit": "GENFN_AUDIT",
}

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_BREACH = 2


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="rwre-lab")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in _EXPERIMENT_BY_COMMAND:
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="JSON config path")
        p.add_argument("--seed", type=int, default=None, help="master seed override")
        p.add_argument("--out", default=".", help="output directory")
        p.add_argument("--replicas", type=int, default=None)
        p.add_argument("--format", choices=["csv", "json"], default="csv")
        p.add_argument("--workers", type=int, default=None)
        p.add_argument("--server", default=None, help="base URL of a running rwre-lab service")
    return parser


def _load_config(args) -> ExperimentConfig:
    raw = json.loads(Path(args.config).read_text())
    raw["experiment"] = _EXPERIMENT_BY_COMMAND[args.command]
    if args.seed is not None:
        raw["seed"] = args.seed
    if args.replicas is not None:
        raw["replicas"] = args.replicas
    if args.workers is not None:
        raw["workers"] = args.workers
    return ExperimentConfig.model_validate(raw)


def _via_server(args, config: ExperimentConfig):
    import httpx

    base = args.server.rstrip("/")
    if args.command == "spectrum":
        body = {"model_spec": config.model_spec.model_dump()}
        resp = httpx.post(f"{base}/spectrum", json=body, timeout=None)
        resp.raise_for_status()
        return SpectrumReportModel.model_validate(resp.json())
    if args.command == "genfn-audit":
        resp = httpx.post(f"{base}/genfn-audit",
                          json=config.model_dump(by_alias=True), timeout=None)
        resp.raise_for_status()
        return AuditReport.model_validate(resp.json())
    resp = httpx.post(f"{base}/experiments/{args.command}",
                      json=config.model_dump(by_alias=True), timeout=None)
    resp.raise_for_status()
    return ScalingResult.model_validate(resp.json())


def _run_local(args, config: ExperimentConfig):
    if args.command == "spectrum":
        report = spectrum_mod.spectrum_report(config.model_spec.to_model())
        return SpectrumReportModel.from_report(report)
    return run_experiment(config)


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        config = _load_config(args)
    except (OSError, json.JSONDecodeError, ValidationError, ModelError, ValueError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    out = Path(args.out)
    try:
        out.mkdir(parents=True, exist_ok=True)
        result = _via_server(args, config) if args.server else _run_local(args, config)
    except (ModelError, ValidationError, ValueError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"io error: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    try:
        if isinstance(result, SpectrumReportModel):
            emit_spectrum(result, out)
        elif isinstance(result, AuditReport):
            (out / "genfn_audit.json").write_text(result.model_dump_json(indent=2) + "\n")
            print(f"genfn audit: {result.cases} cases, {result.failures} failures, "
                  f"worst phi rel {result.worst_phi_rel:.3e}, "
                  f"worst recursion rel {result.worst_recursion_rel:.3e}")
            if not result.passed:
                print(f"invariant breach: {result.counterexample}", file=sys.stderr)
                return EXIT_BREACH
        else:
            name = args.command.replace("-", "_")
            emit(result, args.format, out / f"{name}.{args.format}")
            if result.slope is not None:
                print(f"{args.command}: slope = {result.slope:.6f} "
                      f"+/- {result.slope_stderr:.6f} {result.note}".rstrip())
            else:
                print(f"{args.command}: {result.note}")
    except OSError as exc:
        print(f"io error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
