"""CSV and text output for experiment results."""

from __future__ import annotations

import csv
from pathlib import Path

import numpy as np

from .sim import ExperimentResult, RoundMetrics

CSV_HEADER = ("round", "avg_trust", "avg_trust_pct", "bytes_sync", "bytes_total",
              "attest_attempted", "attest_succeeded", "wallclock_s")
_ROW_FIELDS = ("avg_trust", "avg_trust_pct", "bytes_sync", "bytes_total",
               "attestations_attempted", "attestations_succeeded", "wallclock_seconds")


def fmt(value) -> str:
    return f"{value:.6g}"


def _write_series(path: Path, rows: list) -> None:
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(CSV_HEADER)
        for r in rows:
            writer.writerow([r.round] + [fmt(getattr(r, name)) for name in _ROW_FIELDS])


def trial_csv_name(index: int) -> str:
    return f"trial_{index}.csv"


MEAN_CSV = "trial_mean.csv"
CONFIG_ECHO = "config.txt"
SUMMARY = "summary.txt"


def emit_csv(result: ExperimentResult, path) -> list[Path]:
    """Write one CSV per trial plus the cross-trial mean into directory ``path``.

    Returns the written CSV paths, trials first.
    """
    out = Path(path)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    for i, rows in enumerate(result.trials):
        target = out / trial_csv_name(i)
        _write_series(target, rows)
        written.append(target)
    target = out / MEAN_CSV
    _write_series(target, result.mean)
    written.append(target)
    return written


def emit_config(result: ExperimentResult, path) -> Path:
    target = Path(path) / CONFIG_ECHO
    target.parent.mkdir(parents=True, exist_ok=True)
    target.write_text("".join(f"{k}={v}\n" for k, v in result.config.echo().items()))
    return target


def summarise(result: ExperimentResult) -> dict:
    """Round-averaged figures of the mean series, plus final-round spread."""
    mean: list[RoundMetrics] = result.mean
    last, spread = mean[-1], result.std[-1]

    def avg(name: str) -> float:
        return float(np.mean([getattr(r, name) for r in mean]))

    return {
        "final_avg_trust": last.avg_trust,
        "final_avg_trust_pct": last.avg_trust_pct,
        "final_avg_trust_std": spread.avg_trust,
        "mean_bytes_sync_per_round": avg("bytes_sync"),
        "mean_bytes_sync_per_interaction": float(np.mean(
            [r.bytes_sync_per_interaction for r in mean])),
        "mean_bytes_total_per_round": avg("bytes_total"),
        "mean_bytes_hello_per_round": avg("bytes_hello"),
        "mean_bytes_bundles_per_round": avg("bytes_bundles"),
        "mean_wallclock_s_per_round": avg("wallclock_seconds"),
        "total_attest_attempted": float(sum(r.attestations_attempted for r in mean)),
        "total_attest_succeeded": float(sum(r.attestations_succeeded for r in mean)),
    }


def emit_summary(result: ExperimentResult, path) -> Path:
    target = Path(path) / SUMMARY
    target.parent.mkdir(parents=True, exist_ok=True)
    target.write_text("".join(f"{k}={fmt(v)}\n" for k, v in summarise(result).items()))
    return target


def emit_all(result: ExperimentResult, path) -> list[Path]:
    paths = emit_csv(result, path)
    paths.append(emit_config(result, path))
    paths.append(emit_summary(result, path))
    return paths


def read_csv(path) -> tuple[list[str], np.ndarray]:
    """Header and numeric body of an emitted CSV."""
    with Path(path).open() as fh:
        rows = list(csv.reader(fh))
    return rows[0], np.array(rows[1:], dtype=float)
