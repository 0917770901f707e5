"""Regression and optimisation kernels shared by the estimators.

Everything here works on plain numpy arrays and holds no state, so the
functions are safe to call from concurrent workers.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np


class NumericError(RuntimeError):
    """A kernel failed to converge or met an undefined quantity."""

    def __init__(self, message: str, best=None, trace=None):
        super().__init__(message)
        self.best = best
        self.trace = trace


class SeparationError(NumericError):
    pass


@dataclass
class FitResult:
    coefficients: np.ndarray
    vcov: np.ndarray
    residuals: np.ndarray
    dof: int
    dropped: tuple[int, ...] = ()
    converged: bool = True
    iterations: int = 0
    trace: list = field(default_factory=list)


# ---------------------------------------------------------------------------
# fixed effects


def _group_sum(codes: np.ndarray, n_groups: int, x: np.ndarray) -> np.ndarray:
    """Column sums of ``x`` within groups (``x`` is 2-d)."""
    onehot = np.zeros((n_groups, codes.size))
    onehot[codes, np.arange(codes.size)] = 1.0
    return onehot @ x


def _group_codes(ids) -> tuple[np.ndarray, int]:
    _, codes = np.unique(np.asarray(ids), return_inverse=True)
    codes = codes.ravel()
    return codes, int(codes.max()) + 1 if codes.size else 0


def absorb_two_way(values, unit_ids, time_ids, tol: float = 1e-10, max_sweeps: int = 10_000) -> np.ndarray:
    """Remove unit and time means by alternating projections.

    Sweeps until the largest change in a sweep falls below ``tol`` (relative
    to the input scale). A balanced panel converges after one sweep.
    """
    a = np.array(values, dtype=float, copy=True)
    vec = a.ndim == 1
    if vec:
        a = a[:, None]
    u, nu = _group_codes(unit_ids)
    t, nt = _group_codes(time_ids)
    if a.shape[0] != u.size or u.size != t.size:
        raise ValueError("values and ids must have the same number of rows")
    cu = np.bincount(u, minlength=nu).astype(float)
    ct = np.bincount(t, minlength=nt).astype(float)
    scale = max(1.0, float(np.abs(a).max(initial=0.0)))

    def _means(codes, counts, x):
        return _group_sum(codes, counts.size, x) / counts[:, None]

    for _ in range(max_sweeps):
        before = a.copy()
        a -= _means(u, cu, a)[u]
        a -= _means(t, ct, a)[t]
        if np.abs(a - before).max(initial=0.0) < tol * scale:
            return a[:, 0] if vec else a
    raise NumericError(f"two-way demeaning did not converge in {max_sweeps} sweeps")


def two_way_effects(y, unit_ids, time_ids, n_units: int, n_times: int):
    """Exact least-squares unit and time effects for ``y ~ unit + time``.

    Ids are integers in ``range(n_units)`` / ``range(n_times)``; ``y`` may
    hold several responses as columns. The unit effects are concentrated
    out, leaving a small time-by-time system. ``delta`` is normalised to sum
    to zero over the periods present; absent units or periods get NaN.
    """
    y = np.asarray(y, dtype=float)
    vec = y.ndim == 1
    Y = y[:, None] if vec else y
    u = np.asarray(unit_ids)
    t = np.asarray(time_ids)
    C = np.zeros((n_units, n_times))
    np.add.at(C, (u, t), 1.0)
    cu, ct = C.sum(axis=1), C.sum(axis=0)
    sy_u = _group_sum(u, n_units, Y)
    sy_t = _group_sum(t, n_times, Y)
    ou, ot = cu > 0, ct > 0
    Cu = C[ou][:, ot]
    inv_cu = 1.0 / cu[ou]
    A = np.diag(ct[ot]) - Cu.T @ (Cu * inv_cu[:, None])
    b = sy_t[ot] - Cu.T @ (sy_u[ou] * inv_cu[:, None])
    # one-dimensional null space (a constant shifted between alpha and delta)
    k = A.shape[0]
    A_aug = np.vstack([A, np.ones((1, k))])
    b_aug = np.vstack([b, np.zeros((1, Y.shape[1]))])
    d_sub = np.linalg.lstsq(A_aug, b_aug, rcond=None)[0]
    delta = np.full((n_times, Y.shape[1]), np.nan)
    delta[ot] = d_sub
    alpha = np.full((n_units, Y.shape[1]), np.nan)
    alpha[ou] = (sy_u[ou] - Cu @ d_sub) * inv_cu[:, None]
    if vec:
        return alpha[:, 0], delta[:, 0]
    return alpha, delta


# ---------------------------------------------------------------------------
# linear regression


def independent_columns(X, rtol: float = 1e-7) -> np.ndarray:
    """Indices of columns kept when dropping collinear ones left to right.

    With an unpivoted QR, ``|R[j, j]|`` is the norm of the part of column
    ``j`` orthogonal to all columns before it.
    """
    X = np.asarray(X, dtype=float)
    if X.shape[1] == 0:
        return np.arange(0)
    norms = np.linalg.norm(X, axis=0)
    ref = max(norms.max(initial=0.0), 1e-300)
    live = np.flatnonzero(norms > 1e-12 * ref)
    if live.size == 0:
        return live
    if X.shape[0] < live.size:
        X = np.vstack([X, np.zeros((live.size - X.shape[0], X.shape[1]))])
    # after a dependent column the later diagonals are unreliable, so refactor past each drop
    while True:
        diag = np.abs(np.diag(np.linalg.qr(X[:, live], mode="r")))
        bad = np.flatnonzero(diag <= rtol * norms[live])
        if bad.size == 0:
            return live
        live = np.delete(live, bad[0])


def ols(X, y, weights=None) -> FitResult:
    """Weighted least squares with deterministic leftmost-kept collinearity dropping.

    Coefficients of dropped columns are reported as NaN and listed in
    ``FitResult.dropped``. ``vcov`` is the classical homoskedastic one.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    n, p = X.shape
    if n == 0:
        raise ValueError("ols needs at least one row")
    w = np.ones(n) if weights is None else np.asarray(weights, dtype=float)
    sw = np.sqrt(w)
    Xw, yw = X * sw[:, None], y * sw
    keep = independent_columns(Xw)
    Xk = Xw[:, keep]
    beta_k, *_ = np.linalg.lstsq(Xk, yw, rcond=None)
    beta = np.full(p, np.nan)
    beta[keep] = beta_k
    resid = y - X[:, keep] @ beta_k
    dof = n - keep.size
    bread = np.linalg.pinv(Xk.T @ Xk)
    sigma2 = float(w @ resid**2) / dof if dof > 0 else np.nan
    vcov = np.full((p, p), np.nan)
    vcov[np.ix_(keep, keep)] = sigma2 * bread
    dropped = tuple(sorted(set(range(p)) - set(keep.tolist())))
    return FitResult(beta, vcov, resid, dof, dropped)


def cluster_robust_vcov(fit: FitResult, X, clusters, cr1: bool = True, n_params: Optional[int] = None) -> np.ndarray:
    """Cluster-robust sandwich covariance for a least-squares fit.

    ``X`` is the design (or Jacobian) the fit was computed from. Dropped
    columns get NaN rows and columns. ``cr1`` applies
    ``G/(G-1) * (N-1)/(N-K)``; ``n_params`` overrides ``K`` when parameters
    were concentrated out of ``X``.
    """
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    p = X.shape[1]
    keep = np.array([j for j in range(p) if j not in set(fit.dropped)], dtype=int)
    Xk = X[:, keep]
    e = np.asarray(fit.residuals, dtype=float)
    codes, G = _group_codes(clusters)
    if G < 2:
        raise NumericError("cluster-robust variance needs at least two clusters")
    scores = _group_sum(codes, G, Xk * e[:, None])
    meat = scores.T @ scores
    bread = np.linalg.pinv(Xk.T @ Xk)
    V = bread @ meat @ bread
    if cr1:
        N = Xk.shape[0]
        K = keep.size if n_params is None else n_params
        V = V * (G / (G - 1)) * ((N - 1) / (N - K))
    V = 0.5 * (V + V.T)
    out = np.full((p, p), np.nan)
    out[np.ix_(keep, keep)] = V
    return out


def ridge(X, y, lam: float, intercept: bool = False) -> np.ndarray:
    """Ridge coefficients ``(X'X + lam*P)^-1 X'y``.

    Every column is penalised unless ``intercept`` is true, in which case the
    first column is left unpenalised. ``y`` may hold several responses as
    columns.
    """
    if lam < 0:
        raise ValueError("lambda must be nonnegative")
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    pen = np.full(X.shape[1], float(lam))
    if intercept:
        pen[0] = 0.0
    A = X.T @ X + np.diag(pen)
    return np.linalg.lstsq(A, X.T @ y, rcond=None)[0]


# ---------------------------------------------------------------------------
# simplex-constrained least squares


def project_simplex(v) -> np.ndarray:
    """Euclidean projection of each column of ``v`` onto the probability simplex."""
    v = np.asarray(v, dtype=float)
    vec = v.ndim == 1
    V = v[:, None] if vec else v
    n = V.shape[0]
    u = -np.sort(-V, axis=0)
    css = np.cumsum(u, axis=0)
    css -= 1.0
    # the condition holds on a prefix of the sorted entries
    rho = np.count_nonzero(u * np.arange(1, n + 1)[:, None] > css, axis=0)
    theta = np.take_along_axis(css, (rho - 1)[None, :], axis=0)[0] / rho
    w = V - theta
    np.maximum(w, 0.0, out=w)
    w /= w.sum(axis=0)
    return w[:, 0] if vec else w


@dataclass
class SimplexResult:
    weights: np.ndarray
    objective: float
    kkt: float
    converged: bool
    iterations: int


def simplex_kkt_residual(w, grad) -> float:
    """Frank-Wolfe duality gap ``grad.w - min(grad)``; zero exactly at a minimiser."""
    return float(np.dot(grad, w) - grad.min())


def simplex_weights(
    donor_matrix,
    target,
    tol: float = 1e-10,
    max_iter: int = 20_000,
    init=None,
    raise_on_failure: bool = True,
) -> SimplexResult:
    """Minimise ``||target - donor_matrix @ w||^2`` over the probability simplex.

    Accelerated projected gradient (FISTA with adaptive restart). Convergence
    is declared when the Frank-Wolfe gap, scaled by the objective's scale,
    drops below ``tol``.
    """
    A = np.asarray(donor_matrix, dtype=float)
    b = np.asarray(target, dtype=float)
    if A.ndim == 1:
        A = A[:, None]
    n_donors = A.shape[1]
    if n_donors < 1 or A.shape[0] < 1:
        raise ValueError("need at least one donor and one period")
    AtA = A.T @ A
    Atb = A.T @ b
    L = max(2.0 * np.linalg.eigvalsh(AtA).max(), 1e-300)
    scale = max(float(b @ b), float(np.abs(AtA).max()), 1e-300)

    w = project_simplex(np.full(n_donors, 1.0 / n_donors) if init is None else np.asarray(init, float))
    z, t_k = w.copy(), 1.0
    f = lambda x: float(x @ AtA @ x - 2 * Atb @ x + b @ b)
    grad = lambda x: 2.0 * (AtA @ x - Atb)
    f_prev = f(w)
    gap = np.inf
    for it in range(1, max_iter + 1):
        w_new = project_simplex(z - grad(z) / L)
        f_new = f(w_new)
        if f_new > f_prev:
            # restart momentum
            z, t_k = w.copy(), 1.0
            w_new = project_simplex(w - grad(w) / L)
            f_new = f(w_new)
        t_next = 0.5 * (1 + np.sqrt(1 + 4 * t_k * t_k))
        z = w_new + ((t_k - 1) / t_next) * (w_new - w)
        w, t_k, f_prev = w_new, t_next, f_new
        gap = simplex_kkt_residual(w, grad(w))
        if gap <= tol * scale:
            return SimplexResult(w, max(f_new, 0.0), gap / scale, True, it)
    res = SimplexResult(w, max(f_prev, 0.0), gap / scale, False, max_iter)
    if raise_on_failure:
        raise NumericError(f"simplex weights did not converge (gap {gap / scale:.3g})", best=res)
    return res


# ---------------------------------------------------------------------------
# nonlinear least squares


def check_jacobian(residual_fn, jacobian_fn, params, rtol: float = 1e-4) -> None:
    """Compare an analytic Jacobian with central finite differences."""
    params = np.asarray(params, dtype=float)
    J = np.asarray(jacobian_fn(params), dtype=float)
    num = np.empty_like(J)
    for k in range(params.size):
        h = 1e-6 * max(1.0, abs(params[k]))
        up, dn = params.copy(), params.copy()
        up[k] += h
        dn[k] -= h
        num[:, k] = (residual_fn(up) - residual_fn(dn)) / (2 * h)
    err = np.abs(J - num)
    denom = np.maximum(np.abs(num), 1.0)
    rel = err / denom
    worst = np.unravel_index(np.argmax(rel), rel.shape)
    if rel[worst] > rtol:
        raise ValueError(
            f"jacobian inconsistent with residuals at entry {tuple(int(i) for i in worst)}: "
            f"analytic {J[worst]:.6g} vs finite difference {num[worst]:.6g}"
        )


def nls_fit(
    residual_fn: Callable[[np.ndarray], np.ndarray],
    jacobian_fn: Callable[[np.ndarray], np.ndarray],
    init,
    clusters=None,
    max_iter: int = 500,
    ftol: float = 1e-10,
    gtol: float = 1e-8,
    check: bool = True,
    cr1: bool = True,
    n_params: Optional[int] = None,
) -> FitResult:
    """Levenberg-Marquardt minimisation of ``||r(theta)||^2``.

    Stops when an accepted step changes the objective by less than ``ftol``
    relative, or when the gradient norm drops below ``gtol``. The returned
    ``vcov`` is the cluster-robust sandwich from the Jacobian at the
    solution (classical if ``clusters`` is None).
    """
    theta = np.asarray(init, dtype=float).copy()
    if check:
        check_jacobian(residual_fn, jacobian_fn, theta)
    r = residual_fn(theta)
    J = jacobian_fn(theta)
    obj = float(r @ r)
    mu = 1e-3 * max(np.diag(J.T @ J).max(initial=0.0), 1e-12)
    trace = [obj]
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        g = J.T @ r
        if np.linalg.norm(g) < gtol:
            converged = True
            break
        JTJ = J.T @ J
        accepted = False
        for _ in range(60):
            A = JTJ + mu * np.diag(np.maximum(np.diag(JTJ), 1e-12))
            try:
                step = -np.linalg.solve(A, g)
            except np.linalg.LinAlgError:
                step = -np.linalg.lstsq(A, g, rcond=None)[0]
            cand = theta + step
            r_new = residual_fn(cand)
            obj_new = float(r_new @ r_new)
            if np.isfinite(obj_new) and obj_new <= obj:
                accepted = True
                break
            mu *= 4.0
        if not accepted:
            converged = np.linalg.norm(g) < np.sqrt(gtol)
            break
        rel = (obj - obj_new) / max(obj, 1e-300)
        theta, r, obj = cand, r_new, obj_new
        J = jacobian_fn(theta)
        trace.append(obj)
        mu = max(mu / 3.0, 1e-15)
        if rel < ftol:
            converged = True
            break
    if not converged:
        raise NumericError(f"Levenberg-Marquardt did not converge in {it} iterations", best=theta, trace=trace)
    n = r.size
    fit = FitResult(theta, np.empty((theta.size, theta.size)), r, n - theta.size, converged=True, iterations=it, trace=trace)
    if clusters is None:
        sigma2 = obj / max(n - theta.size, 1)
        fit.vcov = sigma2 * np.linalg.pinv(J.T @ J)
    else:
        fit.vcov = cluster_robust_vcov(fit, J, clusters, cr1=cr1, n_params=n_params)
    return fit


# ---------------------------------------------------------------------------
# logistic regression


def logistic_fit(X, y, tol: float = 1e-10, max_iter: int = 100, max_norm: float = 1e3) -> np.ndarray:
    """Logit coefficients by iteratively reweighted least squares.

    Raises :class:`SeparationError` when the coefficient norm diverges or
    fitted probabilities hit 0/1, the signature of (quasi-)separation.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    if not np.all((y == 0) | (y == 1)):
        raise ValueError("logistic response must be 0/1")
    beta = np.zeros(X.shape[1])
    ybar = y.mean()
    if 0 < ybar < 1 and np.all(X[:, 0] == 1):
        beta[0] = np.log(ybar / (1 - ybar))
    for _ in range(max_iter):
        eta = X @ beta
        p = 1.0 / (1.0 + np.exp(-eta))
        grad = X.T @ (y - p)
        W = p * (1 - p)
        if np.linalg.norm(grad) < tol:
            # a vanishing score with saturated probabilities is separation, not a fit
            if W.min() < 1e-10:
                break
            return beta
        if W.min() < 1e-12 or np.linalg.norm(beta) > max_norm:
            break
        H = X.T @ (X * W[:, None])
        try:
            step = np.linalg.solve(H, grad)
        except np.linalg.LinAlgError:
            break
        beta = beta + step
    raise SeparationError(
        "logistic fit diverged (perfect or quasi-complete separation); drop the covariate from the propensity model"
    )
