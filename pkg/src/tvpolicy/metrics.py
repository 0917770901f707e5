"""Monte Carlo performance metrics: absolute bias, empirical SE, coverage, RMSE.

All four use population denominators (divide by the replicate count), so
``rmse**2 == empirical_se**2 + mean_error**2`` holds exactly up to rounding.
``truth`` may be a scalar or one value per replicate.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Optional, Sequence

import numpy as np

METRICS_COLUMNS = (
    "scenario",
    "estimator",
    "event_time",
    "abs_bias",
    "std_abs_bias",
    "emp_se",
    "coverage",
    "rmse",
    "n_effective",
)
EVENT_TIMES = (1, 2, 3, 4, 5)


def _vec(v, name: str) -> np.ndarray:
    a = np.asarray(v, dtype=float).ravel()
    if a.size == 0:
        raise ValueError(f"{name} is empty")
    return a


def _errors(estimates, truth) -> np.ndarray:
    est = _vec(estimates, "estimates")
    t = np.broadcast_to(np.asarray(truth, dtype=float), est.shape)
    return est - t


def abs_bias(estimates, truth, median: bool = False) -> float:
    """Mean (or median) of ``|estimate - truth|``."""
    e = np.abs(_errors(estimates, truth))
    return float(np.median(e) if median else e.mean())


def empirical_se(estimates) -> float:
    """Population standard deviation of the estimates across replicates."""
    est = _vec(estimates, "estimates")
    if est.size < 2:
        raise ValueError("empirical SE needs at least 2 estimates")
    return float(np.sqrt(np.mean((est - est.mean()) ** 2)))


def coverage(low, high, truth) -> float:
    """Share of closed intervals ``[low, high]`` that contain the truth."""
    lo, hi = _vec(low, "low"), _vec(high, "high")
    if lo.shape != hi.shape:
        raise ValueError("low and high differ in length")
    bad = np.flatnonzero(lo > hi)
    if bad.size:
        raise ValueError(f"interval {bad[0]} has low {lo[bad[0]]} > high {hi[bad[0]]}")
    t = np.broadcast_to(np.asarray(truth, dtype=float), lo.shape)
    return float(np.mean((lo <= t) & (t <= hi)))


def rmse(estimates, truth) -> float:
    e = _errors(estimates, truth)
    return float(np.sqrt(np.mean(e**2)))


@dataclass(frozen=True)
class MetricsRow:
    scenario: str
    estimator_id: str
    event_time: int
    abs_bias: float
    std_abs_bias: float
    emp_se: float
    coverage: float
    rmse: float
    n_effective: int
    diagnostics: tuple[str, ...] = ()

    def values(self) -> tuple:
        return (
            self.scenario,
            self.estimator_id,
            self.event_time,
            self.abs_bias,
            self.std_abs_bias,
            self.emp_se,
            self.coverage,
            self.rmse,
            self.n_effective,
        )


@dataclass(frozen=True)
class ReplicateRecord:
    """One estimator's output at one event time in one replicate."""

    estimator_id: str
    event_time: int
    estimate: float
    se: float
    ci_low: float
    ci_high: float
    truth: float
    converged: bool
    outcome_sd: float = 1.0


def records_from_result(result, truth_table, event_times: Sequence[int] = EVENT_TIMES) -> list[ReplicateRecord]:
    """Flatten an ``EstimatorResult`` and its ``TruthTable`` into per-event-time records."""
    out = []
    for j in event_times:
        est, se, lo, hi = result.at(j)
        # a missing SE still leaves a usable point estimate
        ok = bool(result.converged) and bool(np.isfinite(est))
        out.append(
            ReplicateRecord(
                result.estimator_id, j, est, se, lo, hi, truth_table.truth(j), ok, truth_table.outcome_sd
            )
        )
    return out


def _cell_metrics(scenario, est_id, j, recs: list[ReplicateRecord], median: bool) -> MetricsRow:
    ok = [r for r in recs if r.converged and math.isfinite(r.truth)]
    n = len(ok)
    nan = float("nan")
    if n == 0:
        return MetricsRow(scenario, est_id, j, nan, nan, nan, nan, nan, 0, ("no converged replicates",))
    est = [r.estimate for r in ok]
    tr = [r.truth for r in ok]
    ab = abs_bias(est, tr, median)
    # same pooled SD for every replicate of a base panel; average guards mixed inputs
    sd = float(np.mean([r.outcome_sd for r in ok]))
    diags: tuple[str, ...] = ()
    if n >= 2:
        se = empirical_se(est)
    else:
        se = nan
        diags = ("empirical SE undefined for a single replicate",)
    ci = [r for r in ok if math.isfinite(r.ci_low) and math.isfinite(r.ci_high)]
    cov = coverage([r.ci_low for r in ci], [r.ci_high for r in ci], [r.truth for r in ci]) if ci else nan
    return MetricsRow(scenario, est_id, j, ab, ab / sd, se, cov, rmse(est, tr), n, diags)


def aggregate(
    records: Iterable[ReplicateRecord],
    scenario: str,
    estimator_ids: Optional[Sequence[str]] = None,
    event_times: Sequence[int] = EVENT_TIMES,
    median: bool = False,
) -> list[MetricsRow]:
    """One row per (estimator, event time). Non-converged records are dropped and reflected in ``n_effective``."""
    cells: dict[tuple[str, int], list[ReplicateRecord]] = {}
    seen: list[str] = []
    for r in records:
        if r.estimator_id not in seen:
            seen.append(r.estimator_id)
        cells.setdefault((r.estimator_id, r.event_time), []).append(r)
    ids = list(estimator_ids) if estimator_ids is not None else seen
    return [_cell_metrics(str(scenario), e, j, cells.get((e, j), []), median) for e in ids for j in event_times]


def _fmt(v) -> str:
    if isinstance(v, float):
        return "" if math.isnan(v) else repr(v)
    return str(v)


def write_metrics_csv(rows: Iterable[MetricsRow], path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(METRICS_COLUMNS)
        for r in rows:
            w.writerow([_fmt(v) for v in r.values()])


def read_metrics_csv(path) -> list[MetricsRow]:
    path = Path(path)
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        missing = [c for c in METRICS_COLUMNS if c not in (reader.fieldnames or [])]
        if missing:
            raise ValueError(f"{path}: missing column {missing[0]!r}")
        num = lambda s: float(s) if s != "" else float("nan")
        return [
            MetricsRow(
                row["scenario"],
                row["estimator"],
                int(row["event_time"]),
                num(row["abs_bias"]),
                num(row["std_abs_bias"]),
                num(row["emp_se"]),
                num(row["coverage"]),
                num(row["rmse"]),
                int(row["n_effective"]),
            )
            for row in reader
        ]
