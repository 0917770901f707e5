"""Partially pooled augmented synthetic control for staggered adoption.

Each treated state gets simplex weights over never-treated donors. The
weights jointly minimise a mix of each state's own pre-period imbalance and
the imbalance of the average treated state, with pre-periods aligned by
years before adoption. A ridge regression of donor outcomes on donor
pre-period outcomes and covariate then corrects the remaining imbalance.
Standard errors come from a leave-one-treated-state-out jackknife.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numba import njit

from ..numerics import project_simplex, ridge
from ..panel import PanelDataset, TreatmentSchedule
from ._common import DesignError, require_controls
from .result import EstimatorResult

MIN_PRE_PERIODS = 3


@dataclass
class PooledProblem:
    """Aligned pre-period blocks for ``J`` treated units and ``D`` donors.

    ``donors[j, l]`` holds donor outcomes ``l + 1`` years before unit ``j``
    adopts; ``mask`` marks lags that exist for that unit.
    """

    target: np.ndarray  # (J, Lmax)
    donors: np.ndarray  # (J, Lmax, D)
    mask: np.ndarray  # (J, Lmax) float
    nu: float

    def __post_init__(self):
        self.n_pre = self.mask.sum(axis=1)
        self.J_at_lag = self.mask.sum(axis=0)
        self.lags_used = max(int((self.J_at_lag > 0).sum()), 1)
        self.J = self.target.shape[0]

    def _resid(self, W):
        return (self.target - np.einsum("jld,jd->jl", self.donors, W)) * self.mask

    def objective(self, W) -> float:
        r = self._resid(W)
        own = np.sum((r**2).sum(axis=1) / self.n_pre) / self.J
        rbar = r.sum(axis=0) / np.maximum(self.J_at_lag, 1)
        pooled = np.sum(rbar**2) / self.lags_used
        return float((1 - self.nu) * own + self.nu * pooled)

    def gradient(self, W) -> np.ndarray:
        r = self._resid(W)
        rbar = r.sum(axis=0) / np.maximum(self.J_at_lag, 1)
        c = (1 - self.nu) * r / (self.J * self.n_pre[:, None])
        c = c + self.nu * self.mask * (rbar / (self.lags_used * np.maximum(self.J_at_lag, 1)))[None, :]
        return -2.0 * np.einsum("jl,jld->jd", c, self.donors)

    def subset(self, keep: np.ndarray) -> "PooledProblem":
        return PooledProblem(self.target[keep], self.donors[keep], self.mask[keep], self.nu)


@njit(cache=True)
def _project_row(v, out):
    n = v.size
    u = np.sort(v)[::-1]
    css = 0.0
    theta = 0.0
    for k in range(n):
        css += u[k]
        t = (css - 1.0) / (k + 1)
        if u[k] > t:
            theta = t
    total = 0.0
    for k in range(n):
        out[k] = max(v[k] - theta, 0.0)
        total += out[k]
    for k in range(n):
        out[k] /= total


@njit(cache=True)
def _resid(target, donors, mask, W, r):
    J, L, D = donors.shape
    for j in range(J):
        for l in range(L):
            if mask[j, l] > 0:
                acc = target[j, l]
                for d in range(D):
                    acc -= donors[j, l, d] * W[j, d]
                r[j, l] = acc
            else:
                r[j, l] = 0.0


@njit(cache=True)
def _objective(r, n_pre, j_at_lag, lags_used, nu):
    J, L = r.shape
    own = 0.0
    for j in range(J):
        s = 0.0
        for l in range(L):
            s += r[j, l] * r[j, l]
        own += s / n_pre[j]
    own /= J
    pooled = 0.0
    for l in range(L):
        if j_at_lag[l] > 0:
            m = 0.0
            for j in range(J):
                m += r[j, l]
            m /= j_at_lag[l]
            pooled += m * m
    return (1.0 - nu) * own + nu * pooled / lags_used


@njit(cache=True)
def _gradient(r, donors, mask, n_pre, j_at_lag, lags_used, nu, g):
    J, L, D = donors.shape
    rbar = np.zeros(L)
    for l in range(L):
        if j_at_lag[l] > 0:
            for j in range(J):
                rbar[l] += r[j, l]
            rbar[l] /= j_at_lag[l]
    for j in range(J):
        for d in range(D):
            g[j, d] = 0.0
        for l in range(L):
            if mask[j, l] > 0:
                c = (1.0 - nu) * r[j, l] / (J * n_pre[j]) + nu * rbar[l] / (lags_used * j_at_lag[l])
                for d in range(D):
                    g[j, d] -= 2.0 * c * donors[j, l, d]


@njit(cache=True)
def _fista(target, donors, mask, nu, W0, tol, max_iter):
    J, L, D = donors.shape
    n_pre = np.zeros(J)
    j_at_lag = np.zeros(L)
    for j in range(J):
        for l in range(L):
            n_pre[j] += mask[j, l]
            j_at_lag[l] += mask[j, l]
    lags_used = 0
    sq = 0.0
    for l in range(L):
        if j_at_lag[l] > 0:
            lags_used += 1
    for j in range(J):
        for l in range(L):
            sq += mask[j, l] * target[j, l] * target[j, l]
    scale = max(sq / max(n_pre.sum(), 1.0), 1e-300)
    lags_used = max(lags_used, 1)

    W = W0.copy()
    Z = W.copy()
    Wn = np.empty_like(W)
    g = np.empty_like(W)
    r = np.empty((J, L))
    row = np.empty(D)
    _resid(target, donors, mask, W, r)
    f_W = _objective(r, n_pre, j_at_lag, lags_used, nu)
    t_k = 1.0
    step = 1.0 / scale
    for it in range(1, max_iter + 1):
        _resid(target, donors, mask, Z, r)
        f_Z = _objective(r, n_pre, j_at_lag, lags_used, nu)
        _gradient(r, donors, mask, n_pre, j_at_lag, lags_used, nu, g)
        while True:
            for j in range(J):
                for d in range(D):
                    row[d] = Z[j, d] - step * g[j, d]
                _project_row(row, Wn[j])
            lin = 0.0
            quad = 0.0
            for j in range(J):
                for d in range(D):
                    diff = Wn[j, d] - Z[j, d]
                    lin += g[j, d] * diff
                    quad += diff * diff
            _resid(target, donors, mask, Wn, r)
            f_new = _objective(r, n_pre, j_at_lag, lags_used, nu)
            if f_new <= f_Z + lin + quad / (2.0 * step) + 1e-15 * scale:
                break
            step *= 0.5
        if f_new > f_W and t_k > 1.0:
            # adaptive restart; a plain step from W (t_k == 1) is always taken
            Z[:] = W
            t_k = 1.0
            continue
        t_next = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * t_k * t_k))
        mom = (t_k - 1.0) / t_next
        for j in range(J):
            for d in range(D):
                Z[j, d] = Wn[j, d] + mom * (Wn[j, d] - W[j, d])
        W[:] = Wn
        f_W = f_new
        t_k = t_next
        step *= 1.1
        # Frank-Wolfe gap at W bounds the suboptimality
        _gradient(r, donors, mask, n_pre, j_at_lag, lags_used, nu, g)
        gap = 0.0
        for j in range(J):
            gmin = g[j, 0]
            dot = 0.0
            for d in range(D):
                dot += g[j, d] * W[j, d]
                if g[j, d] < gmin:
                    gmin = g[j, d]
            gap += dot - gmin
        if gap <= tol * scale:
            return W, True, it
    return W, False, max_iter


def solve_pooled_weights(problem: PooledProblem, init=None, tol: float = 1e-6, max_iter: int = 5000):
    """FISTA with backtracking and adaptive restart over a product of simplices.

    Returns ``(W, converged, iterations)`` where ``W`` is ``(J, D)``.
    Convergence uses the summed Frank-Wolfe gap, an upper bound on the
    suboptimality, relative to the mean squared target.
    """
    J, _, D = problem.donors.shape
    W0 = np.full((J, D), 1.0 / D) if init is None else project_simplex(np.asarray(init, float).T).T
    return _fista(
        np.ascontiguousarray(problem.target, dtype=float),
        np.ascontiguousarray(problem.donors, dtype=float),
        np.ascontiguousarray(problem.mask, dtype=float),
        float(problem.nu),
        np.ascontiguousarray(W0),
        float(tol),
        int(max_iter),
    )


def ascm_staggered(
    data: PanelDataset,
    schedule: TreatmentSchedule,
    nu: float = 0.5,
    ridge_lambda: float = 1.0,
    include_covariate: bool = True,
    jackknife: bool = True,
) -> EstimatorResult:
    """Event-time effects from partially pooled, ridge-augmented synthetic controls.

    ``ridge_lambda`` is relative: the penalty is ``ridge_lambda`` times the
    mean eigenvalue of the centred donor feature cross-product, which keeps
    the estimator scale equivariant.
    """
    if not 0.0 <= nu <= 1.0:
        raise ValueError("nu must lie in [0, 1]")
    require_controls(schedule, data)
    adopt = schedule.adoption_array(data)
    y0 = data.years[0]
    donors = np.flatnonzero(np.isnan(adopt))
    diags: list[str] = []
    treated = []
    for i in np.flatnonzero(~np.isnan(adopt)):
        n_pre = int(adopt[i]) - y0
        if n_pre < MIN_PRE_PERIODS:
            diags.append(f"{data.states[i]}: {n_pre} pre-periods, excluded")
        else:
            treated.append(i)
    if not treated:
        raise DesignError("no treated state has enough pre-periods")
    treated = np.asarray(treated)
    Y, X = data.outcome, data.covariate
    J, D = treated.size, donors.size
    n_pre = (adopt[treated] - y0).astype(int)
    Lmax = int(n_pre.max())

    target = np.zeros((J, Lmax))
    block = np.zeros((J, Lmax, D))
    mask = np.zeros((J, Lmax))
    for j, (i, npre) in enumerate(zip(treated, n_pre)):
        cols = npre - 1 - np.arange(npre)  # lag 1 is the year before adoption
        target[j, :npre] = Y[i, cols]
        block[j, :npre] = Y[donors][:, cols].T
        mask[j, :npre] = 1.0
    problem = PooledProblem(target, block, mask, nu)
    W, converged, iters = solve_pooled_weights(problem)
    if not converged:
        diags.append(f"donor weights stopped at iteration limit ({iters})")

    # ridge augmentation: per treated unit, one multi-response fit over post years
    T = data.n_years
    aug = []  # (centred target features, centred donor features, slope block) per treated unit
    for j, (i, npre) in enumerate(zip(treated, n_pre)):
        feats = Y[donors][:, :npre]
        tgt = Y[i, :npre]
        if include_covariate:
            feats = np.column_stack([feats, X[donors][:, :npre].mean(axis=1)])
            tgt = np.append(tgt, X[i, :npre].mean())
        resp = Y[donors][:, npre:]
        mu = feats.mean(axis=0)
        Fc = feats - mu
        lam = ridge_lambda * float(np.trace(Fc.T @ Fc)) / Fc.shape[1]
        coef = ridge(np.column_stack([np.ones(D), Fc]), resp, lam, intercept=True)
        aug.append((tgt - mu, Fc, coef[1:]))

    def gaps(Wm: np.ndarray, rows: np.ndarray) -> np.ndarray:
        out = np.full((rows.size, T), np.nan)
        for r, j in enumerate(rows):
            npre = n_pre[j]
            tc, Fc, slope = aug[j]
            synth = Wm[r] @ Y[donors][:, npre:]
            correction = (tc - Wm[r] @ Fc) @ slope
            out[r, npre:] = Y[treated[j], npre:] - synth - correction
        return out

    all_rows = np.arange(J)
    G = gaps(W, all_rows)
    # event time of column t for unit j is t - n_pre[j] + 1
    max_j = T - int(n_pre.min())
    js = np.arange(1, max_j + 1)

    def by_event(Gm, rows):
        out = np.full(js.size, np.nan)
        for k, jj in enumerate(js):
            vals = [Gm[r, n_pre[j] + jj - 1] for r, j in enumerate(rows) if n_pre[j] + jj - 1 < T]
            if vals:
                out[k] = np.mean(vals)
        return out

    est = by_event(G, all_rows)
    se = np.full(js.size, np.nan)
    if jackknife and J > 1:
        loo = np.full((J, js.size), np.nan)
        for j in range(J):
            keep = np.delete(all_rows, j)
            Wj, ok, _ = solve_pooled_weights(problem.subset(keep), init=W[keep], max_iter=2000)
            loo[j] = by_event(gaps(Wj, keep), keep)
        for k in range(js.size):
            v = loo[:, k][~np.isnan(loo[:, k])]
            if v.size > 1:
                se[k] = np.sqrt((v.size - 1) / v.size * np.sum((v - v.mean()) ** 2))
    ok = ~np.isnan(est)
    return EstimatorResult("ASCM", js[ok], est[ok], se[ok], True, diags)
