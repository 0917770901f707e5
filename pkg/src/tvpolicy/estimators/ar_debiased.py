"""Debiased autoregressive model.

    y[i,t] = a[i] + b*x[i,t]
             + sum_{s=1..k} d[s] * (y[i,t-s] - sum_{z=0..l} h[z]*A[i,t-s-z])
             + sum_{z=0..l} h[z]*A[i,t-z] + e[i,t]

``A`` is the absorbing policy indicator. Lagged outcomes are purged of the
policy's own contribution before acting as controls. Because ``A`` stays on
once switched on, the effect at event time ``j`` is the partial sum
``h[0] + ... + h[j-1]``.

Unit intercepts are concentrated out by demeaning within state, leaving a
small nonlinear least-squares problem in ``(b, d, h)``.
"""

from __future__ import annotations

import numpy as np

from ..numerics import NumericError, nls_fit, ols
from ..panel import PanelDataset, TreatmentSchedule
from ._common import require_controls
from .event_study import did_event_study
from .result import EstimatorResult


def _lag(a: np.ndarray, s: int) -> np.ndarray:
    """Shift columns right by ``s``; the first ``s`` columns become zero."""
    out = np.zeros_like(a)
    if s < a.shape[1]:
        out[:, s:] = a[:, : a.shape[1] - s]
    return out


class ARDebiasedModel:
    """Residuals and Jacobian of the concentrated problem for one dataset."""

    def __init__(self, y: np.ndarray, x: np.ndarray, A: np.ndarray, k: int, l: int, include_covariate: bool = True):
        S, T = y.shape
        if T <= k:
            raise ValueError(f"panel of {T} years too short for {k} outcome lags")
        self.k, self.l = k, l
        self.include_covariate = include_covariate
        rows = slice(k, T)
        self.units = np.repeat(np.arange(S), T - k)
        self.y = y[:, rows].ravel()
        self.x = x[:, rows].ravel()
        A = A.astype(float)
        self.ylag = [_lag(y, s)[:, rows].ravel() for s in range(1, k + 1)]
        # policy history is known to be zero before the panel starts (adoption falls inside it)
        self.alag = [_lag(A, s)[:, rows].ravel() for s in range(0, k + l + 1)]
        self.n_units = S

    @property
    def n_params(self) -> int:
        return int(self.include_covariate) + self.k + self.l + 1

    def split(self, p):
        c = int(self.include_covariate)
        beta = p[0] if c else 0.0
        return beta, p[c : c + self.k], p[c + self.k :]

    def _demean(self, v: np.ndarray) -> np.ndarray:
        sums = np.bincount(self.units, weights=v, minlength=self.n_units)
        cnt = np.bincount(self.units, minlength=self.n_units)
        return v - (sums / cnt)[self.units]

    def fitted(self, p) -> np.ndarray:
        beta, d, h = self.split(p)
        f = beta * self.x
        for s in range(1, self.k + 1):
            purge = sum(h[z] * self.alag[s + z] for z in range(self.l + 1))
            f = f + d[s - 1] * (self.ylag[s - 1] - purge)
        f = f + sum(h[z] * self.alag[z] for z in range(self.l + 1))
        return f

    def residuals(self, p) -> np.ndarray:
        return self._demean(self.y - self.fitted(p))

    def jacobian(self, p) -> np.ndarray:
        beta, d, h = self.split(p)
        cols = []
        if self.include_covariate:
            cols.append(self.x)
        for s in range(1, self.k + 1):
            purge = sum(h[z] * self.alag[s + z] for z in range(self.l + 1))
            cols.append(self.ylag[s - 1] - purge)
        for z in range(self.l + 1):
            cols.append(self.alag[z] - sum(d[s - 1] * self.alag[s + z] for s in range(1, self.k + 1)))
        J = np.column_stack(cols)
        # residual = demean(y - f), so its derivative is -demean(df/dp)
        sums = np.zeros((self.n_units, J.shape[1]))
        np.add.at(sums, self.units, J)
        cnt = np.bincount(self.units, minlength=self.n_units)
        return -(J - (sums / cnt[:, None])[self.units])


def _initial_values(model: ARDebiasedModel, data, schedule, include_covariate: bool) -> np.ndarray:
    k, l = model.k, model.l
    X = [model._demean(model.ylag[0])]
    if include_covariate:
        X.insert(0, model._demean(model.x))
    fit = ols(np.column_stack(X), model._demean(model.y))
    beta0 = fit.coefficients[0] if include_covariate else None
    d0 = np.zeros(k)
    d0[0] = np.nan_to_num(fit.coefficients[-1])
    h0 = np.zeros(l + 1)
    try:
        es = did_event_study(data, schedule, include_covariate=include_covariate)
        gam = np.nan_to_num(es.estimates_for(range(1, l + 2)))
        h0 = np.diff(np.concatenate([[0.0], gam]))
    except Exception:  # warm start only
        pass
    parts = ([np.nan_to_num(beta0)] if include_covariate else []) + [d0, h0]
    return np.concatenate([np.atleast_1d(p) for p in parts])


def ar_debiased(
    data: PanelDataset,
    schedule: TreatmentSchedule,
    k_lags: int = 1,
    l_lags: int = 5,
    include_covariate: bool = True,
) -> EstimatorResult:
    require_controls(schedule, data)
    A = schedule.treated_matrix(data)
    model = ARDebiasedModel(data.outcome, data.covariate, A, k_lags, l_lags, include_covariate)
    init = _initial_values(model, data, schedule, include_covariate)
    try:
        fit = nls_fit(model.residuals, model.jacobian, init, clusters=model.units, n_params=model.n_params)
    except NumericError as err:
        return EstimatorResult.failed("AR-DB", f"nonlinear least squares failed: {err}")

    _, _, h = model.split(fit.coefficients)
    c = int(include_covariate) + k_lags
    Vh = fit.vcov[c:, c:]
    js = np.arange(1, l_lags + 2)
    # event time j sums the first j policy-history coefficients
    C = np.tril(np.ones((js.size, l_lags + 1)))
    est = C @ h
    se = np.sqrt(np.clip(np.einsum("ij,jk,ik->i", C, Vh, C), 0, None))
    diags = [f"LM iterations: {fit.iterations}"]
    return EstimatorResult("AR-DB", js, est, se, True, diags)
