"""Averages of metrics tables across event times and scenarios, and a plain-text report."""

from __future__ import annotations

from typing import Iterable, Optional, Sequence

import numpy as np

from .metrics import MetricsRow


def average(
    rows: Iterable[MetricsRow],
    field: str,
    scenarios: Optional[Sequence[str]] = None,
    event_times: Sequence[int] = (1, 2, 3, 4, 5),
) -> dict[str, float]:
    """Mean of ``field`` per estimator over the chosen scenarios and event times (NaNs skipped)."""
    acc: dict[str, list[float]] = {}
    for r in rows:
        if scenarios is not None and r.scenario not in scenarios:
            continue
        if r.event_time not in event_times:
            continue
        acc.setdefault(r.estimator_id, []).append(getattr(r, field))
    return {e: float(np.nanmean(v)) if np.isfinite(v).any() else float("nan") for e, v in acc.items()}


def by_event_time(rows: Iterable[MetricsRow], field: str, scenario: str, estimator: str) -> list[float]:
    pts = sorted((r.event_time, getattr(r, field)) for r in rows if r.scenario == scenario and r.estimator_id == estimator)
    return [v for _, v in pts]


def report(rows: Sequence[MetricsRow], fields=("std_abs_bias", "abs_bias", "emp_se", "coverage", "rmse")) -> str:
    """Estimator-by-metric table of averages over all scenarios and event times 1-5."""
    avgs = {f: average(rows, f) for f in fields}
    ests = list(dict.fromkeys(r.estimator_id for r in rows))
    lines = ["estimator  " + " ".join(f"{f:>13}" for f in fields)]
    for e in ests:
        lines.append(f"{e:<10} " + " ".join(f"{avgs[f].get(e, float('nan')):>13.4f}" for f in fields))
    return "\n".join(lines)
