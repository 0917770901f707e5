"""Imputation-based event studies: two-stage DID and the imputation estimator.

Both fit unit and year effects on untreated rows only (never-treated states
plus pre-adoption years) and read treatment effects off the treated rows.
They differ in where the covariate enters: the two-stage version adjusts
for it in the second-stage regression, the imputation version in the first
stage. Uncertainty comes from a bootstrap that resamples whole states.
"""

from __future__ import annotations

from typing import Callable, Optional

import numpy as np

from ..numerics import two_way_effects
from ..panel import EventWindow, PanelDataset, TreatmentSchedule
from ._common import DesignError, Long, require_controls, to_long
from .result import EstimatorResult

DEFAULT_BOOTSTRAP = 200


def _stage_one(L: Long, unit, n_units, with_covariate: bool):
    """Fit ``y ~ unit + year [+ x]`` on untreated rows; return fitted pieces for every row."""
    untreated = ~L.treated
    if np.bincount(L.time[untreated], minlength=L.n_times).min() == 0:
        raise DesignError("a year has no untreated observations; year effects are unidentified")
    cols = np.column_stack([L.y, L.x]) if with_covariate else L.y[:, None]
    alpha, delta = two_way_effects(cols[untreated], unit[untreated], L.time[untreated], n_units, L.n_times)
    if np.isnan(alpha[unit[L.treated], 0]).any():
        raise DesignError("a treated state has no untreated years to estimate its unit effect")
    if not with_covariate:
        return alpha[unit, 0] + delta[L.time, 0], 0.0
    # residualised y and x on the untreated rows give the covariate slope
    ry = L.y[untreated] - alpha[unit[untreated], 0] - delta[L.time[untreated], 0]
    rx = L.x[untreated] - alpha[unit[untreated], 1] - delta[L.time[untreated], 1]
    sxx = float(rx @ rx)
    beta = float(rx @ ry) / sxx if sxx > 0 else 0.0
    fe = (alpha[unit, 0] - beta * alpha[unit, 1]) + (delta[L.time, 0] - beta * delta[L.time, 1])
    return fe + beta * L.x, beta


def _imputation_point(L: Long, unit, n_units, include_covariate: bool) -> dict[int, float]:
    fitted, _ = _stage_one(L, unit, n_units, include_covariate)
    tr = L.treated
    gaps = L.y[tr] - fitted[tr]
    et = L.event_time[tr].astype(int)
    return {int(j): float(gaps[et == j].mean()) for j in np.unique(et)}


def _two_stage_point(L: Long, unit, n_units, window: EventWindow, include_covariate: bool) -> dict[int, float]:
    fitted, _ = _stage_one(L, unit, n_units, with_covariate=False)
    tr = L.treated
    adj = L.y[tr] - fitted[tr]
    et = window.clip(L.event_time[tr]).astype(int)
    bins = np.unique(et)
    D = (et[:, None] == bins[None, :]).astype(float)
    X = np.column_stack([D, L.x[tr]]) if include_covariate else D
    coef, *_ = np.linalg.lstsq(X, adj, rcond=None)
    return {int(b): float(c) for b, c in zip(bins, coef[: bins.size])}


def _bootstrap(
    L: Long, point: Callable[[Long, np.ndarray, int], dict[int, float]], B: int, rng: np.random.Generator
) -> tuple[dict[int, float], int]:
    """Standard deviation of ``point`` over state-resampled panels, and the number of failed draws."""
    T = L.n_times
    rows_of_unit = np.arange(L.n_units * T).reshape(L.n_units, T)
    draws: dict[int, list[float]] = {}
    failed = 0
    for _ in range(B):
        pick = rng.integers(0, L.n_units, L.n_units)
        idx = rows_of_unit[pick].ravel()
        Lb = Long(
            unit=np.repeat(np.arange(L.n_units), T),
            time=L.time[idx],
            y=L.y[idx],
            x=L.x[idx],
            event_time=L.event_time[idx],
            adoption=L.adoption[idx],
            n_units=L.n_units,
            n_times=T,
        )
        if not Lb.treated.any():
            failed += 1
            continue
        try:
            est = point(Lb, Lb.unit, Lb.n_units)
        except (DesignError, np.linalg.LinAlgError):
            failed += 1
            continue
        for j, v in est.items():
            draws.setdefault(j, []).append(v)
    se = {j: float(np.std(v, ddof=1)) if len(v) > 1 else np.nan for j, v in draws.items()}
    return se, failed


def _assemble(name: str, est: dict[int, float], se: dict[int, float], failed: int, B: int) -> EstimatorResult:
    js = sorted(est)
    diags = [f"{failed} of {B} bootstrap draws failed"] if failed else []
    return EstimatorResult(name, js, [est[j] for j in js], [se.get(j, np.nan) for j in js], True, diags)


def did_two_stage(
    data: PanelDataset,
    schedule: TreatmentSchedule,
    window: Optional[EventWindow] = None,
    include_covariate: bool = True,
    n_boot: int = DEFAULT_BOOTSTRAP,
    rng: Optional[np.random.Generator] = None,
) -> EstimatorResult:
    """Stage one: unit and year effects from untreated rows. Stage two:
    regress the adjusted treated outcomes on event-time dummies and the covariate."""
    require_controls(schedule, data)
    window = window or EventWindow.covering(data)
    rng = rng if rng is not None else np.random.default_rng(0)
    L = to_long(data, schedule)
    point = lambda Lx, u, n: _two_stage_point(Lx, u, n, window, include_covariate)
    est = point(L, L.unit, L.n_units)
    se, failed = _bootstrap(L, point, n_boot, rng) if n_boot > 1 else ({}, 0)
    return _assemble("DID-2S", est, se, failed, n_boot)


def did_imputation(
    data: PanelDataset,
    schedule: TreatmentSchedule,
    window: Optional[EventWindow] = None,
    include_covariate: bool = True,
    n_boot: int = DEFAULT_BOOTSTRAP,
    rng: Optional[np.random.Generator] = None,
) -> EstimatorResult:
    """Impute untreated outcomes from unit, year and covariate effects fitted on
    untreated rows, then average observed-minus-imputed gaps by event time.

    ``window`` is accepted for interface symmetry; every observed post event
    time is reported unbinned.
    """
    require_controls(schedule, data)
    rng = rng if rng is not None else np.random.default_rng(0)
    L = to_long(data, schedule)
    point = lambda Lx, u, n: _imputation_point(Lx, u, n, include_covariate)
    est = point(L, L.unit, L.n_units)
    se, failed = _bootstrap(L, point, n_boot, rng) if n_boot > 1 else ({}, 0)
    return _assemble("DID-IMP", est, se, failed, n_boot)
