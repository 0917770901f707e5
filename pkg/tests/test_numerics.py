import itertools

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from tvpolicy.numerics import (
    NumericError,
    SeparationError,
    absorb_two_way,
    check_jacobian,
    cluster_robust_vcov,
    independent_columns,
    logistic_fit,
    nls_fit,
    ols,
    project_simplex,
    ridge,
    simplex_weights,
    two_way_effects,
)

finite = st.floats(-100, 100, allow_nan=False, allow_infinity=False)


# -- fixed effects ----------------------------------------------------------


def test_absorb_two_by_two_hand_value():
    # grand mean 2.75, unit means (1.5, 4), time means (2, 3.5)
    y = np.array([1.0, 2.0, 3.0, 5.0])
    out = absorb_two_way(y, [0, 0, 1, 1], [0, 1, 0, 1])
    np.testing.assert_allclose(out, [0.25, -0.25, -0.25, 0.25], atol=1e-12)


def test_absorb_constant_is_zero():
    rng = np.random.default_rng(1)
    u, t = rng.integers(0, 5, 40), rng.integers(0, 4, 40)
    np.testing.assert_allclose(absorb_two_way(np.full(40, 3.3), u, t), 0.0, atol=1e-12)


@given(arrays(float, (6, 4), elements=finite))
def test_absorb_is_idempotent(Y):
    u = np.repeat(np.arange(6), 4)
    t = np.tile(np.arange(4), 6)
    once = absorb_two_way(Y.ravel(), u, t)
    twice = absorb_two_way(once, u, t)
    np.testing.assert_allclose(twice, once, atol=1e-9 * max(1.0, np.abs(Y).max()))


def test_two_way_effects_match_alternating_projections():
    rng = np.random.default_rng(3)
    u = np.repeat(np.arange(12), 9)
    t = np.tile(np.arange(9), 12)
    keep = rng.random(u.size) > 0.25
    y = rng.normal(size=u.size)
    alpha, delta = two_way_effects(y[keep], u[keep], t[keep], 12, 9)
    resid = y[keep] - alpha[u[keep]] - delta[t[keep]]
    np.testing.assert_allclose(resid, absorb_two_way(y[keep], u[keep], t[keep], tol=1e-13), atol=1e-9)


# -- least squares ------------------------------------------------------------


def test_ols_exact_fit_and_mean():
    X = np.column_stack([np.ones(5), np.arange(5.0)])
    fit = ols(X, 2 + 3 * np.arange(5.0))
    np.testing.assert_allclose(fit.residuals, 0, atol=1e-12)
    assert ols(np.ones((2, 1)), [1.0, 3.0]).coefficients[0] == pytest.approx(2.0)


def test_ols_drops_duplicate_column():
    rng = np.random.default_rng(0)
    x = rng.normal(size=20)
    y = 1 + 2 * x + rng.normal(size=20)
    full = ols(np.column_stack([np.ones(20), x, x]), y)
    red = ols(np.column_stack([np.ones(20), x]), y)
    assert full.dropped == (2,)
    assert np.isnan(full.coefficients[2])
    np.testing.assert_allclose(full.coefficients[:2], red.coefficients)
    np.testing.assert_allclose(full.vcov[:2, :2], red.vcov)


def test_ols_needs_rows():
    with pytest.raises(ValueError):
        ols(np.empty((0, 1)), np.empty(0))


def test_independent_columns_keeps_leftmost():
    x = np.arange(6.0)
    X = np.column_stack([np.ones(6), x, 2 * x + 1, x**2])
    np.testing.assert_array_equal(independent_columns(X), [0, 1, 3])


def test_cr0_sandwich_hand_value():
    X = np.ones((4, 1))
    fit = ols(X, [1.0, 1.0, 3.0, 3.0])
    V = cluster_robust_vcov(fit, X, ["a", "a", "b", "b"], cr1=False)
    # meat = (-2)^2 + 2^2 = 8, bread = 1/4
    assert V[0, 0] == pytest.approx(0.5, abs=1e-12)
    assert np.sqrt(V[0, 0]) == pytest.approx(0.7071067811865476, abs=1e-10)


def test_cr0_singletons_equal_hc0():
    rng = np.random.default_rng(5)
    X = np.column_stack([np.ones(30), rng.normal(size=30)])
    fit = ols(X, rng.normal(size=30))
    V = cluster_robust_vcov(fit, X, np.arange(30), cr1=False)
    bread = np.linalg.inv(X.T @ X)
    hc0 = bread @ (X.T * fit.residuals**2) @ X @ bread
    np.testing.assert_allclose(V, hc0, rtol=1e-10)


def test_cluster_vcov_single_cluster_errors():
    X = np.ones((3, 1))
    with pytest.raises(NumericError):
        cluster_robust_vcov(ols(X, [1.0, 2.0, 3.0]), X, [0, 0, 0])


def test_ridge_examples():
    X = np.column_stack([np.ones(10), np.arange(10.0)])
    y = np.arange(10.0) ** 1.5
    np.testing.assert_allclose(ridge(X, y, 0.0), ols(X, y).coefficients, rtol=1e-10)
    assert ridge(np.array([1.0, 1.0]), np.array([2.0, 2.0]), 2.0)[0] == pytest.approx(1.0)
    np.testing.assert_allclose(ridge(X, y, 1e12), 0.0, atol=1e-6)
    with pytest.raises(ValueError):
        ridge(X, y, -1.0)


def test_ridge_intercept_unpenalised():
    x = np.arange(8.0)
    y = 5.0 + 0 * x
    coef = ridge(np.column_stack([np.ones(8), x - x.mean()]), y, 100.0, intercept=True)
    np.testing.assert_allclose(coef, [5.0, 0.0], atol=1e-12)


# -- simplex ------------------------------------------------------------------


@given(arrays(float, 7, elements=finite))
def test_projection_lands_on_simplex_and_is_idempotent(v):
    w = project_simplex(v)
    assert w.min() >= 0
    assert w.sum() == pytest.approx(1.0)
    np.testing.assert_allclose(project_simplex(w), w, atol=1e-12)


def test_simplex_exact_match_donor():
    rng = np.random.default_rng(2)
    A = rng.normal(size=(6, 4))
    res = simplex_weights(A, A[:, 2])
    np.testing.assert_allclose(res.weights, [0, 0, 1, 0], atol=1e-6)
    assert res.objective == pytest.approx(0.0, abs=1e-10)


def test_simplex_midpoint():
    res = simplex_weights(np.array([[1.0, 3.0], [2.0, 4.0]]), np.array([2.0, 3.0]))
    np.testing.assert_allclose(res.weights, [0.5, 0.5], atol=1e-8)


def grid_objective(A, b, step=0.01):
    n = int(round(1 / step))
    best = np.inf
    for i, j in itertools.product(range(n + 1), repeat=2):
        if i + j <= n:
            w = np.array([i, j, n - i - j]) / n
            best = min(best, float(np.sum((b - A @ w) ** 2)))
    return best


@pytest.mark.parametrize("seed", range(5))
def test_simplex_matches_grid_search(seed):
    rng = np.random.default_rng(seed)
    A, b = rng.normal(size=(5, 3)), rng.normal(size=5)
    res = simplex_weights(A, b)
    brute = grid_objective(A, b)
    assert res.objective <= brute + 1e-12
    assert abs(res.objective - brute) < 1e-3


def test_simplex_non_convergence_carries_best_iterate():
    rng = np.random.default_rng(0)
    A, b = rng.normal(size=(10, 8)), rng.normal(size=10)
    with pytest.raises(NumericError) as info:
        simplex_weights(A, b, tol=1e-30, max_iter=3)
    assert info.value.best.weights.sum() == pytest.approx(1.0)


# -- nonlinear least squares ----------------------------------------------------


def test_nls_linear_case_matches_ols():
    rng = np.random.default_rng(4)
    X = np.column_stack([np.ones(40), rng.normal(size=(40, 2))])
    y = X @ [1.0, -2.0, 0.5] + rng.normal(size=40)
    fit = nls_fit(lambda b: y - X @ b, lambda b: -X, np.zeros(3))
    np.testing.assert_allclose(fit.coefficients, ols(X, y).coefficients, atol=1e-10)


def test_nls_recovers_noiseless_ar1():
    y = 8.0 * 0.5 ** np.arange(12)
    r = lambda p: y[1:] - p[0] * y[:-1]
    J = lambda p: -y[:-1, None]
    fit = nls_fit(r, J, np.array([0.1]))
    assert fit.coefficients[0] == pytest.approx(0.5, abs=1e-8)


def test_nls_rejects_wrong_jacobian():
    x = np.linspace(0, 1, 10)
    with pytest.raises(ValueError, match=r"entry \(\d+, 0\)"):
        nls_fit(lambda p: x * p[0] ** 2 - 1, lambda p: (x * p[0])[:, None], np.array([1.3]))


def test_nls_non_convergence_has_trace():
    t = np.linspace(0, 3, 30)
    y = np.exp(-1.7 * t)
    with pytest.raises(NumericError) as info:
        nls_fit(lambda p: y - np.exp(-p[0] * t), lambda p: (t * np.exp(-p[0] * t))[:, None], np.array([0.1]), max_iter=1)
    assert len(info.value.trace) >= 1


def test_check_jacobian_passes_for_correct_derivative():
    check_jacobian(lambda p: np.array([p[0] ** 3, np.sin(p[1])]), lambda p: np.diag([3 * p[0] ** 2, np.cos(p[1])]), np.array([0.7, 0.2]))


# -- logistic ---------------------------------------------------------------------


def test_logistic_closed_forms():
    b = logistic_fit(np.ones((2, 1)), [0.0, 1.0])
    assert 1 / (1 + np.exp(-b[0])) == pytest.approx(0.5)
    b = logistic_fit(np.ones((8, 1)), [1, 1, 0, 0, 0, 0, 0, 0])
    assert 1 / (1 + np.exp(-b[0])) == pytest.approx(0.25)


def test_logistic_score_equations():
    rng = np.random.default_rng(9)
    X = np.column_stack([np.ones(200), rng.normal(size=(200, 2))])
    y = (rng.random(200) < 1 / (1 + np.exp(-(X @ [0.2, 1.0, -0.5])))).astype(float)
    b = logistic_fit(X, y)
    p = 1 / (1 + np.exp(-(X @ b)))
    np.testing.assert_allclose(X.T @ (y - p), 0, atol=1e-8)


def test_logistic_separation():
    x = np.arange(10.0)
    with pytest.raises(SeparationError, match="drop the covariate"):
        logistic_fit(np.column_stack([np.ones(10), x]), (x > 4.5).astype(float))
