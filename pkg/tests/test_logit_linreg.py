import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from repayfactor.errors import DomainError, RankError, ShapeError
from repayfactor.logit_linreg import (
    fit_ols,
    inverse_logit,
    logit_transform,
    predict_linear,
    predict_rates,
)


def test_logit_examples():
    assert logit_transform([0.5]).y[0] == 0.0
    assert logit_transform([0.6]).y[0] == pytest.approx(math.log(0.6 / 0.4), abs=1e-15)
    assert logit_transform([1.0], 1e-6).y[0] == pytest.approx(math.log((1 - 1e-6) / 1e-6), abs=1e-9)
    assert logit_transform([0.0], 1e-6).y[0] == pytest.approx(-math.log((1 - 1e-6) / 1e-6), abs=1e-9)


def test_logit_domain_error_names_index():
    with pytest.raises(DomainError, match="index 2"):
        logit_transform([0.1, 0.2, 1.5])
    with pytest.raises(DomainError):
        logit_transform([np.nan])


def test_inverse_logit_examples():
    assert inverse_logit([0.0])[0] == 0.5
    assert inverse_logit([math.log(1.5)])[0] == pytest.approx(0.6, abs=1e-12)
    with np.errstate(over="raise"):
        big = inverse_logit([1000.0, -1000.0])
    assert abs(big[0] - 1.0) < 1e-15 and 0.0 <= big[1] < 1e-300


@settings(max_examples=200, deadline=None)
@given(st.floats(0.0, 1.0), st.sampled_from([1e-6, 1e-3, 0.1]))
def test_round_trip(p, eps):
    back = inverse_logit(logit_transform([p], eps).y)[0]
    assert abs(back - min(max(p, eps), 1 - eps)) < 1e-12


def test_hand_fixture():
    m = fit_ols([[1.0], [2.0], [3.0], [4.0]], [2.0, 4.0, 6.0, 8.0])
    assert m.intercept == pytest.approx(0.0, abs=1e-14)
    assert m.coefficients[0] == pytest.approx(2.0, abs=1e-14)
    assert m.r_squared == 1.0


def test_three_point_needs_more_rows():
    # three points and one feature leave one residual degree of freedom
    m = fit_ols([[1.0], [2.0], [3.0]], [2.0, 4.0, 6.0])
    assert (m.intercept, m.coefficients[0]) == pytest.approx((0.0, 2.0), abs=1e-14)
    with pytest.raises(RankError):
        fit_ols([[1.0], [2.0]], [2.0, 4.0])


def test_perfect_fit():
    rng = np.random.default_rng(0)
    X = rng.standard_normal((30, 4))
    y = 1.5 + X @ np.array([1.0, -2.0, 0.5, 3.0])
    m = fit_ols(X, y)
    assert m.r_squared == pytest.approx(1.0, abs=1e-14)
    assert m.residual_variance <= 1e-16 * float(y @ y)


def test_against_textbook_inference():
    rng = np.random.default_rng(1)
    n, d = 80, 3
    X = rng.standard_normal((n, d))
    y = 0.3 + X @ np.array([0.5, 0.0, -1.0]) + rng.standard_normal(n)
    m = fit_ols(X, y)
    # oracle: normal equations with an explicit inverse
    A = np.column_stack([np.ones(n), X])
    G = np.linalg.inv(A.T @ A)
    b = G @ A.T @ y
    s2 = np.sum((y - A @ b) ** 2) / (n - d - 1)
    se = np.sqrt(s2 * np.diag(G))
    t = b / se
    p = 2 * stats.t.sf(np.abs(t), n - d - 1)
    assert np.allclose(np.r_[m.intercept, m.coefficients], b, atol=1e-10)
    assert np.allclose(m.std_errors, se, rtol=1e-9)
    assert np.allclose(m.t_stats, t, rtol=1e-9)
    assert np.allclose(m.p_values, p, atol=1e-12)
    assert m.residual_variance == pytest.approx(s2, rel=1e-12)


def test_rank_error_names_column():
    rng = np.random.default_rng(2)
    X = rng.standard_normal((20, 3))
    X = np.column_stack([X, X[:, 0] + X[:, 1]])
    with pytest.raises(RankError, match="'(a|b|c|d)'"):
        fit_ols(X, rng.standard_normal(20), names=["a", "b", "c", "d"])


def test_predictions():
    m = fit_ols([[1.0], [2.0], [3.0], [4.0]], [2.0, 4.0, 6.0, 8.0])
    assert predict_rates(m, [[0.2027]])[0] == pytest.approx(0.6, abs=1e-4)
    with pytest.raises(ShapeError):
        predict_linear(m, np.ones((2, 2)))
    zero = fit_ols([[1.0], [-1.0], [1.0], [-1.0]], [0.0, 0.0, 0.0, 0.0])
    assert np.allclose(predict_rates(zero, [[5.0], [-3.0]]), 0.5)


def test_weak_coefficient_has_large_p():
    rng = np.random.default_rng(3)
    x = rng.standard_normal(200)
    y = rng.standard_normal(200)
    y = y - np.polyval(np.polyfit(x, y, 1), x) + 1.0  # residualize: slope exactly 0
    m = fit_ols(x[:, None], y)
    assert abs(m.t_stats[1]) < 1e-8 and m.p_values[1] > 0.999


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**31), st.integers(1, 6), st.floats(-50, 50))
def test_ols_invariants(seed, d, shift):
    rng = np.random.default_rng(seed)
    n = d + 10
    X = rng.standard_normal((n, d))
    y = X @ rng.standard_normal(d) + rng.standard_normal(n)
    m = fit_ols(X, y)
    A = np.column_stack([np.ones(n), X])
    fitted = predict_linear(m, X)
    assert np.max(np.abs(A.T @ (y - fitted))) < 1e-8
    r = np.corrcoef(y, fitted)[0, 1]
    assert abs(m.r_squared - r * r) < 1e-10
    assert 0.0 <= m.r_squared <= 1.0
    assert np.all((m.p_values >= 0) & (m.p_values <= 1))
    ok = m.std_errors > 0
    est = np.r_[m.intercept, m.coefficients]
    assert np.allclose(m.t_stats[ok], est[ok] / m.std_errors[ok], rtol=1e-12)
    X2 = X.copy()
    X2[:, 0] += shift
    m2 = fit_ols(X2, y)
    assert np.allclose(m2.coefficients, m.coefficients, atol=1e-9)
