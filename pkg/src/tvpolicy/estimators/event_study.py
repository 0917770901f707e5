"""Two-way fixed-effects event studies: the pooled specification and the
cohort-interacted (interaction-weighted) specification."""

from __future__ import annotations

from typing import Optional

import numpy as np

from ..numerics import absorb_two_way, cluster_robust_vcov, ols
from ..panel import EventWindow, PanelDataset, TreatmentSchedule
from ._common import cohort_shares, require_controls, to_long
from .result import EstimatorResult


def _fit_absorbed(L, cols: np.ndarray, include_covariate: bool):
    X = cols if not include_covariate else np.column_stack([cols, L.x])
    Xd = absorb_two_way(np.column_stack([X, L.y]), L.unit, L.time)
    fit = ols(Xd[:, :-1], Xd[:, -1])
    fit.vcov = cluster_robust_vcov(fit, Xd[:, :-1], L.unit)
    return fit


def did_event_study(
    data: PanelDataset,
    schedule: TreatmentSchedule,
    window: Optional[EventWindow] = None,
    include_covariate: bool = True,
) -> EstimatorResult:
    """Event-time dummies with unit and year fixed effects and state-clustered CR1 errors.

    Event times at or beyond the window edges share the edge dummy; event
    time -1 is the omitted reference year.
    """
    require_controls(schedule, data)
    window = window or EventWindow.covering(data)
    L = to_long(data, schedule)
    et = window.clip(L.event_time)
    bins = [b for b in range(window.min_lead, window.max_lag + 1) if b not in (-1, 0)]
    D = np.column_stack([(et == b).astype(float) for b in bins])
    present = D.any(axis=0)
    bins = [b for b, k in zip(bins, present) if k]
    D = D[:, present]
    fit = _fit_absorbed(L, D, include_covariate)

    k = len(bins)
    coef, V = fit.coefficients[:k], fit.vcov[:k, :k]
    ok = ~np.isnan(coef)
    diags = [f"dropped collinear event-time bin {b}" for b, good in zip(bins, ok) if not good]
    se = np.sqrt(np.clip(np.diag(V)[ok], 0, None))
    return EstimatorResult("DID-ES", np.asarray(bins)[ok], coef[ok], se, True, diags)


def did_interaction_weighted(
    data: PanelDataset,
    schedule: TreatmentSchedule,
    window: Optional[EventWindow] = None,
    include_covariate: bool = True,
) -> EstimatorResult:
    """Cohort-by-event-time interactions aggregated with cohort shares.

    Never-treated states are the control cohort. Each event time's effect is
    the cohort-size-weighted average of the cohort-specific coefficients;
    standard errors follow by the delta method on the clustered vcov.
    """
    require_controls(schedule, data)
    window = window or EventWindow.covering(data)
    L = to_long(data, schedule)
    et = window.clip(L.event_time)
    cohorts = sorted(int(a) for a in np.unique(L.adoption[~np.isnan(L.adoption)]))
    bins = [b for b in range(window.min_lead, window.max_lag + 1) if b not in (-1, 0)]

    keys, cols = [], []
    for e in cohorts:
        in_e = L.adoption == e
        for b in bins:
            d = in_e & (et == b)
            if d.any():
                keys.append((e, b))
                cols.append(d.astype(float))
    fit = _fit_absorbed(L, np.column_stack(cols), include_covariate)
    k = len(keys)
    coef, V = fit.coefficients[:k], fit.vcov[:k, :k]

    adopt_by_unit = schedule.adoption_array(data)
    shares = cohort_shares(adopt_by_unit, data.years, bins)
    col_of = {key: i for i, key in enumerate(keys)}
    out_j, out_est, out_se, diags = [], [], [], []
    for b in bins:
        avail = {e: s for e, s in shares.get(b, {}).items() if (e, b) in col_of and not np.isnan(coef[col_of[e, b]])}
        if b in (window.min_lead, window.max_lag):
            # edge bins pool several event times; weight cohorts by their row counts there
            counts = {e: float(np.sum((L.adoption == e) & (et == b))) for e in avail}
            tot = sum(counts.values())
            avail = {e: c / tot for e, c in counts.items()} if tot else {}
        if not avail:
            continue
        tot = sum(avail.values())
        w = np.zeros(k)
        for e, s in avail.items():
            w[col_of[e, b]] = s / tot
        if tot < 1 - 1e-12:
            diags.append(f"event time {b}: renormalised shares after dropped cohorts")
        good = w != 0
        est = float(w[good] @ coef[good])
        var = float(w[good] @ V[np.ix_(good, good)] @ w[good])
        out_j.append(b)
        out_est.append(est)
        out_se.append(np.sqrt(max(var, 0.0)))
    return EstimatorResult("DID-HT", out_j, out_est, out_se, True, diags)
