"""Result persistence: trial/aggregate CSVs, companions, and the run manifest.

CSV schemas (one row per trial record):

  trials.csv      experiment,method,level_or_L,n,m,lambda,d_f,d_b,target_mse,seed,trial,status
  aggregates.csv  experiment,method,level_or_L,n,lambda,d_f,d_b,mean,q25,q75,count

The aggregate table carries the full cell key (n, lambda, d_f, d_b alongside
level_or_L) so every sweep's cells stay distinguishable; fields that are not
part of a cell's key are left empty.  All floats are serialized with 17
significant digits so equal results are byte-identical across runs and
worker counts.
"""

from __future__ import annotations

import csv
import hashlib
import json
import time
from dataclasses import asdict
from pathlib import Path

from .experiments import AggregateRecord, ExperimentConfig, ExperimentResult, TrialRecord

TRIAL_COLUMNS = ("experiment", "method", "level_or_L", "n", "m", "lambda",
                 "d_f", "d_b", "target_mse", "seed", "trial", "status")
AGGREGATE_COLUMNS = ("experiment", "method", "level_or_L", "n", "lambda",
                     "d_f", "d_b", "mean", "q25", "q75", "count")


def fmt(value) -> str:
    """Serialize one cell: 17 significant digits for floats, blank for None."""
    if value is None:
        return ""
    if isinstance(value, float):
        return format(value, ".17g")
    return str(value)


def _write_csv(path: Path, columns, rows) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(columns)
        writer.writerows(rows)


def write_trials_csv(path: Path, rows: list[TrialRecord]) -> None:
    _write_csv(path, TRIAL_COLUMNS, (
        (r.experiment, r.method, fmt(r.level_or_l), r.n, r.m, fmt(r.lam),
         fmt(r.d_f), fmt(r.d_b), fmt(r.target_mse), r.seed, r.trial, r.status)
        for r in rows))


def write_aggregates_csv(path: Path, rows: list[AggregateRecord]) -> None:
    _write_csv(path, AGGREGATE_COLUMNS, (
        (r.experiment, r.method, fmt(r.level_or_l), fmt(r.n), fmt(r.lam),
         fmt(r.d_f), fmt(r.d_b), fmt(r.mean), fmt(r.q25), fmt(r.q75), r.count)
        for r in rows))


def write_companion_csv(path: Path, rows: list[dict]) -> None:
    if not rows:
        return
    columns = list(rows[0].keys())
    _write_csv(path, columns, ((fmt(row[c]) for c in columns) for row in rows))


def read_csv_dicts(path: Path) -> list[dict]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def parse_cell(text: str):
    """Inverse of fmt for numeric cells: '' -> None, else float."""
    return None if text == "" else float(text)


def sha256_file(path: Path) -> str:
    digest = hashlib.sha256()
    digest.update(Path(path).read_bytes())
    return digest.hexdigest()


def write_result(result: ExperimentResult, out_dir: Path) -> dict[str, str]:
    """Write trial, aggregate, and companion CSVs; return name -> checksum."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    write_trials_csv(out_dir / "trials.csv", result.trial_rows)
    write_aggregates_csv(out_dir / "aggregates.csv", result.aggregate_rows)
    for name, rows in sorted(result.companion.items()):
        write_companion_csv(out_dir / f"{name}.csv", rows)
    checksums = {}
    for path in sorted(out_dir.glob("*.csv")):
        checksums[path.name] = sha256_file(path)
    return checksums


def write_manifest(out_dir: Path, config_path: str | None, cfg: ExperimentConfig,
                   checksums: dict[str, str], started_at: float,
                   warnings: list[str], tool_version: str) -> Path:
    """Snapshot everything that determines the run, plus output checksums."""
    manifest = {
        "tool_version": tool_version,
        "config_path": config_path,
        "config": asdict(cfg),
        "seed": cfg.seed,
        "started_at_unix": started_at,
        "finished_at_unix": time.time(),
        "out_dir": str(out_dir),
        "files": checksums,
        "warnings": warnings,
    }
    path = Path(out_dir) / "manifest.json"
    with open(path, "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return path
