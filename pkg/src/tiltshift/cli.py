"""Command-line entry point.

Subcommands:

  run          execute a configured experiment, writing trials.csv,
               aggregates.csv, companion CSVs, and manifest.json
  verify       run a randomized identity suite and emit a JSON report
  figure-data  emit per-figure CSVs from completed run outputs

Exit codes: 0 success; 1 verify gap exceedance; 2 config schema violation
(with the offending field path); 3 solver hard-failure rate above one half
in some cell; 4 missing figure inputs.

Environment: TILT_OUT_DIR is the default output root, TILT_MAX_THREADS caps
the worker count; no other environment state is read.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time
from dataclasses import replace
from pathlib import Path

from . import __version__
from .experiments import (
    GROUP_FIELDS,
    ConfigError,
    ExperimentConfig,
    config_from_dict,
    run_experiment,
)
from .figures import FIGURES, MissingInputError, emit_figure
from .reporting import write_manifest, write_result
from .verification import DEFAULT_CASES, DEFAULT_TOLS, SUITES

EXIT_OK = 0
EXIT_VERIFY_FAIL = 1
EXIT_CONFIG = 2
EXIT_SOLVER_FAILURES = 3
EXIT_MISSING_INPUT = 4


def _default_out_root() -> Path:
    return Path(os.environ.get("TILT_OUT_DIR", "out"))


def _thread_count(requested: int | None) -> int:
    cap = int(os.environ.get("TILT_MAX_THREADS", "0")) or (os.cpu_count() or 1)
    if requested is None:
        return cap
    return max(1, min(requested, cap))


def _parse_override(text: str) -> tuple[str, object]:
    if "=" not in text:
        raise ConfigError("--set", f"override {text!r} is not key=value")
    key, raw = text.split("=", 1)
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw
    return key.strip(), value


def _apply_overrides(doc: dict, overrides: list[str]) -> dict:
    out = json.loads(json.dumps(doc))
    for item in overrides:
        key, value = _parse_override(item)
        node = out
        parts = key.split(".")
        for part in parts[:-1]:
            node = node.setdefault(part, {})
            if not isinstance(node, dict):
                raise ConfigError(key, "override path crosses a non-object value")
        node[parts[-1]] = value
    return out


def _error_record(code: int, kind: str, **fields) -> int:
    print(json.dumps({"error": kind, **fields}, sort_keys=True), file=sys.stderr)
    return code


def cmd_run(args) -> int:
    try:
        doc = json.loads(Path(args.config).read_text())
    except FileNotFoundError:
        return _error_record(EXIT_CONFIG, "config", field="--config",
                             message=f"no such file: {args.config}")
    except json.JSONDecodeError as exc:
        return _error_record(EXIT_CONFIG, "config", field="<root>",
                             message=f"invalid JSON: {exc}")
    overrides = list(args.set or [])
    if args.seed is not None:
        overrides.append(f"seed={args.seed}")
    if args.trials is not None:
        overrides.append(f"trials={args.trials}")
    try:
        doc = _apply_overrides(doc, overrides)
        cfg = config_from_dict(doc)
    except ConfigError as exc:
        return _error_record(EXIT_CONFIG, "config", field=exc.path, message=str(exc))

    out_dir = Path(args.out) if args.out else _default_out_root() / cfg.experiment
    started = time.time()
    result = run_experiment(cfg, threads=_thread_count(args.threads))
    checksums = write_result(result, out_dir)
    write_manifest(out_dir, args.config, cfg, checksums, started,
                   result.warnings, __version__)

    failure_rate = _worst_cell_failure_rate(result)
    if failure_rate > 0.5:
        return _error_record(EXIT_SOLVER_FAILURES, "solver_failures",
                             worst_cell_failure_rate=failure_rate, out_dir=str(out_dir))
    print(json.dumps({"out_dir": str(out_dir), "rows": len(result.trial_rows),
                      "cells": len(result.aggregate_rows)}, sort_keys=True))
    return EXIT_OK


def _worst_cell_failure_rate(result) -> float:
    fields = GROUP_FIELDS[result.config.experiment]
    cells: dict[tuple, list[str]] = {}
    for row in result.trial_rows:
        key = tuple(getattr(row, f) for f in fields)
        cells.setdefault(key, []).append(row.status)
    worst = 0.0
    for statuses in cells.values():
        worst = max(worst, statuses.count("failed") / len(statuses))
    return worst


def cmd_verify(args) -> int:
    suite = SUITES[args.kind]
    tol = args.tol if args.tol is not None else DEFAULT_TOLS[args.kind]
    cases = args.cases if args.cases is not None else DEFAULT_CASES[args.kind]
    if tol < 0:
        return _error_record(EXIT_CONFIG, "config", field="--tol",
                             message="tolerance must be nonnegative")
    report = suite(cases=cases, seed=args.seed, tol=tol)
    print(json.dumps(report, sort_keys=True))
    return EXIT_OK if report["pass"] else EXIT_VERIFY_FAIL


def cmd_figure_data(args) -> int:
    out_dir = Path(args.out) if args.out else _default_out_root() / "figure_data"
    try:
        path = emit_figure(args.figure, out_dir,
                           Path(args.run_dir) if args.run_dir else None)
    except MissingInputError as exc:
        return _error_record(EXIT_MISSING_INPUT, "missing_input",
                             figure=exc.figure, needed_experiment=exc.needed,
                             message=str(exc))
    print(json.dumps({"figure": args.figure, "path": str(path)}, sort_keys=True))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="tiltshift",
        description="Covariate-shift experiments for the target-penalized "
                    "auxiliary-offset estimator")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    run_p = sub.add_parser("run", help="execute a configured experiment")
    run_p.add_argument("--config", required=True, help="JSON config path")
    run_p.add_argument("--out", help="output directory (default: $TILT_OUT_DIR/<experiment>)")
    run_p.add_argument("--seed", type=int, help="override the config seed")
    run_p.add_argument("--trials", type=int, help="override the trial count")
    run_p.add_argument("--threads", type=int, help="worker threads (capped by TILT_MAX_THREADS)")
    run_p.add_argument("--set", action="append", metavar="KEY=VALUE",
                       help="override any config field (repeatable; dotted paths allowed)")
    run_p.set_defaults(fn=cmd_run)

    ver_p = sub.add_parser("verify", help="run a randomized identity suite")
    ver_p.add_argument("kind", choices=sorted(SUITES))
    ver_p.add_argument("--tol", type=float, help="maximum allowed gap")
    ver_p.add_argument("--cases", type=int, help="number of random instances")
    ver_p.add_argument("--seed", type=int, default=0)
    ver_p.set_defaults(fn=cmd_verify)

    fig_p = sub.add_parser("figure-data", help="emit per-figure CSVs")
    fig_p.add_argument("figure", choices=FIGURES)
    fig_p.add_argument("--out", help="output directory (default: $TILT_OUT_DIR/figure_data)")
    fig_p.add_argument("--run-dir", help="directory holding a completed run's CSVs")
    fig_p.set_defaults(fn=cmd_figure_data)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.fn(args)


if __name__ == "__main__":
    sys.exit(main())
