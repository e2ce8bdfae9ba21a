import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from repayfactor.elastic_net import (
    EnetConfig,
    EnetModel,
    _cd_solve,
    fit_at,
    fit_path,
    kkt_check,
    lambda_grid,
    lambda_max,
    objective,
    soft_threshold,
    standardize,
    tune,
)
from repayfactor.errors import ConvergenceError, UnboundedError
from repayfactor.logit_linreg import fit_ols, logit_transform

from planted import orthonormal_design


def closed_form(X, y, lam, alpha):
    """Orthonormal design: each coordinate solves its own 1-d problem."""
    n = X.shape[0]
    z = X.T @ (y - y.mean()) / n
    return soft_threshold(z, lam * alpha) / (1 + lam * (1 - alpha))


def test_lambda_max_examples():
    n = 4
    x = np.array([1.0, -1.0, 1.0, -1.0])
    y = 0.7 * x  # (1/n) x'y = 0.7
    assert lambda_max(x[:, None], y, 1.0) == pytest.approx(0.7)
    assert lambda_max(x[:, None], y, 0.5) == pytest.approx(1.4)
    with pytest.raises(UnboundedError):
        lambda_max(x[:, None], y, 0.0)
    assert n == x.size


def test_orthogonal_target_degenerate_path():
    X = np.array([[1.0], [-1.0], [1.0], [-1.0]])
    y = np.array([1.0, 1.0, -1.0, -1.0])
    path = fit_path(X, y, EnetConfig(), 0.5)
    assert path.lambdas.tolist() == [0.0]
    assert np.all(path.coefficients == 0.0)


def test_path_starts_at_zero():
    rng = np.random.default_rng(0)
    X = rng.standard_normal((50, 6))
    y = X[:, 0] + rng.standard_normal(50)
    path = fit_path(X, y, EnetConfig(path_length=30), 0.5)
    Xs, yc, _ = standardize(X, y)
    assert path.lambdas[0] == pytest.approx(lambda_max(Xs, yc, 0.5))
    assert np.all(path.coefficients[:, 0] == 0.0)
    assert path.active_counts[0] == 0 and path.active_counts[-1] >= path.active_counts[0]
    assert np.all(np.diff(path.lambdas) < 0)


@pytest.mark.parametrize("alpha", [0.1, 0.5, 1.0])
def test_orthonormal_closed_form(alpha):
    rng = np.random.default_rng(7)
    X = orthonormal_design(rng, 64, 8)
    y = X @ rng.standard_normal(8) + 0.3 * rng.standard_normal(64)
    path = fit_path(X, y, EnetConfig(path_length=40), alpha)
    for k, lam in enumerate(path.lambdas):
        assert np.max(np.abs(path.coefficients[:, k] - closed_form(X, y, lam, alpha))) < 1e-8


def test_tiny_lambda_matches_ols():
    rng = np.random.default_rng(1)
    X = rng.standard_normal((60, 5)) * [1, 10, 0.1, 5, 2]
    y = 2 + X @ [0.5, -0.1, 3, 0.2, -1] + rng.standard_normal(60)
    model = fit_at(X, y, EnetConfig(tolerance=1e-12, max_iters=100000), 1.0, 1e-9)
    ols = fit_ols(X, y)
    assert np.max(np.abs(model.coefficients - ols.coefficients)) < 1e-4
    assert abs(model.intercept - ols.intercept) < 1e-4


def test_ridge_limit():
    rng = np.random.default_rng(2)
    X = rng.standard_normal((60, 5))
    y = X @ [1, -1, 0.5, 0, 2] + rng.standard_normal(60)
    alpha, lam = 1e-4, 0.1
    model = fit_at(X, y, EnetConfig(tolerance=1e-12, max_iters=100000), alpha, lam)
    Xs, yc, st_ = standardize(X, y)
    n = X.shape[0]
    ridge = np.linalg.solve(Xs.T @ Xs / n + lam * (1 - alpha) * np.eye(5), Xs.T @ yc / n)
    assert np.max(np.abs(model.coefficients * st_.scales - ridge)) < 1e-4


def test_objective_monotone_over_sweeps():
    rng = np.random.default_rng(3)
    X = rng.standard_normal((40, 10))
    X[:, 1] = X[:, 0] + 0.1 * rng.standard_normal(40)
    y = X[:, :3].sum(axis=1) + rng.standard_normal(40)
    Xs, yc, st_ = standardize(X, y)
    n = X.shape[0]
    G, c = Xs.T @ Xs / n, Xs.T @ yc / n
    lam, alpha = 0.05, 0.7
    beta, grad = np.zeros(10), c.copy()
    values = [objective(Xs, yc, beta, lam, alpha)]
    for _ in range(30):
        _cd_solve(G, c, st_.constant, beta, grad, lam, alpha, 0.0, 1)
        values.append(objective(Xs, yc, beta, lam, alpha))
    assert all(b <= a + 1e-15 for a, b in zip(values, values[1:]))
    assert values[-1] < values[0]


def test_path_continuity_under_refinement():
    rng = np.random.default_rng(4)
    X = rng.standard_normal((80, 6))
    y = X @ [1, 0.5, 0, 0, -1, 0.2] + rng.standard_normal(80)
    Xs, yc, _ = standardize(X, y)
    lmax = lambda_max(Xs, yc, 0.5)
    steps = []
    for length in (11, 21, 41, 81):
        path = fit_path(X, y, EnetConfig(), 0.5, lambda_grid(lmax, 1e-3, length))
        steps.append(np.max(np.abs(np.diff(path.coefficients, axis=1))))
    assert all(b < a for a, b in zip(steps, steps[1:]))


def test_convergence_error():
    rng = np.random.default_rng(5)
    X = rng.standard_normal((30, 4))
    X[:, 1] = X[:, 0] + 1e-3 * rng.standard_normal(30)
    y = X[:, 0] + rng.standard_normal(30)
    with pytest.raises(ConvergenceError) as info:
        fit_path(X, y, EnetConfig(max_iters=1, tolerance=1e-14, path_length=20), 1.0)
    assert info.value.lambda_index >= 1


def test_constant_column_zero_coefficient():
    rng = np.random.default_rng(6)
    X = np.column_stack([rng.standard_normal(30), np.full(30, 2.0)])
    path = fit_path(X, X[:, 0] + 1, EnetConfig(path_length=10), 0.5)
    assert np.all(path.coefficients[1] == 0.0)


@pytest.fixture(scope="module")
def tuned():
    rng = np.random.default_rng(8)
    n, p = 300, 20
    X = rng.standard_normal((n, p)) * rng.uniform(0.5, 50, p)
    logit = 0.3 + (X[:, :4] / X[:, :4].std(axis=0)) @ [0.4, -0.3, 0.3, 0.2] + 0.2 * rng.standard_normal(n)
    target = logit_transform(1 / (1 + np.exp(-logit)))
    cfg = EnetConfig(path_length=40)
    return X, target, cfg, tune(X, target, cfg, folds=5, seed=3)


def test_tune_selects_cv_minimum(tuned):
    X, target, cfg, model = tuned
    best = min(float(m.min()) for m in model.cv_mean.values())
    assert model.cv_rmse == best
    li = int(np.flatnonzero(model.cv_lambdas[model.alpha] == model.lambda_)[0])
    assert model.cv_mean[model.alpha][li] == best
    assert set(model.active_set) == {model.feature_names[j] for j in np.flatnonzero(model.coefficients)}
    assert {"x0", "x1", "x2", "x3"} <= set(model.active_set)


def test_tune_deterministic(tuned):
    X, target, cfg, model = tuned
    again = tune(X, target, cfg, folds=5, seed=3)
    assert again.alpha == model.alpha and again.lambda_ == model.lambda_
    assert np.array_equal(again.coefficients, model.coefficients)
    assert again.intercept == model.intercept


def test_kkt(tuned):
    X, target, cfg, model = tuned
    assert kkt_check(X, target, model) < 1e-6
    j = int(np.flatnonzero(model.coefficients)[0])
    bumped = model.coefficients.copy()
    bumped[j] += 0.1
    fake = EnetModel(model.alpha, model.lambda_, bumped, model.intercept, model.active_set,
                     model.cv_rmse, model.feature_names)
    assert kkt_check(X, target, fake) > 10 * cfg.tolerance


def test_kkt_zero_model_above_lambda_max():
    rng = np.random.default_rng(9)
    X = rng.standard_normal((40, 5))
    y = X[:, 0] + rng.standard_normal(40)
    Xs, yc, _ = standardize(X, y)
    lmax = lambda_max(Xs, yc, 0.3)
    model = fit_at(X, y, EnetConfig(), 0.3, lmax * 1.01)
    assert np.all(model.coefficients == 0.0)
    assert kkt_check(X, y, model) == 0.0


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**31), st.floats(0.05, 1.0))
def test_orthonormal_property(seed, alpha):
    rng = np.random.default_rng(seed)
    X = orthonormal_design(rng, 32, 5)
    y = X @ rng.standard_normal(5) + rng.standard_normal(32)
    path = fit_path(X, y, EnetConfig(path_length=15), alpha)
    for k, lam in enumerate(path.lambdas):
        assert np.max(np.abs(path.coefficients[:, k] - closed_form(X, y, lam, alpha))) < 1e-8
