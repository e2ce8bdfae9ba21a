"""Elastic-net regression by cyclic coordinate descent along a lambda path.

Minimizes

    (1/2n) ||y - X b||^2 + lam * alpha * ||b||_1 + (lam * (1 - alpha) / 2) ||b||^2

on internally standardized features (mean 0, variance 1 with denominator n)
and a centered response; coefficients are mapped back to the original scale.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numba
import numpy as np

from .errors import ConvergenceError, ShapeError, UnboundedError
from .logit_linreg import TransformedTarget, inverse_logit
from .metrics import make_folds


@dataclass(frozen=True)
class EnetConfig:
    alpha_grid: tuple[float, ...] = (0.1, 0.3, 0.5, 0.7, 0.9)
    gamma: float = 5e-3
    path_length: int = 100
    tolerance: float = 1e-7
    max_iters: int = 10_000

    def __post_init__(self):
        object.__setattr__(self, "alpha_grid", tuple(float(a) for a in self.alpha_grid))
        if not self.alpha_grid or any(not 0.0 < a <= 1.0 for a in self.alpha_grid):
            raise ValueError("alpha_grid entries must lie in (0, 1]")
        if not 0.0 < self.gamma < 1.0:
            raise ValueError("gamma must lie in (0, 1)")
        if self.path_length < 1 or self.max_iters < 1 or self.tolerance <= 0:
            raise ValueError("path_length, max_iters and tolerance must be positive")


@dataclass(frozen=True, eq=False)
class EnetPath:
    alpha: float
    lambdas: np.ndarray
    coefficients: np.ndarray  # p x L, original scale
    intercepts: np.ndarray
    active_counts: np.ndarray
    sweeps: np.ndarray = field(default=None, repr=False)

    def predict(self, X) -> np.ndarray:
        """n x L matrix of linear predictions, one column per lambda."""
        return self.intercepts + np.asarray(X, dtype=np.float64) @ self.coefficients


@dataclass(frozen=True, eq=False)
class EnetModel:
    alpha: float
    lambda_: float
    coefficients: np.ndarray
    intercept: float
    active_set: list[str]
    cv_rmse: float
    feature_names: tuple[str, ...] = ()
    path: EnetPath | None = field(default=None, repr=False)
    cv_mean: dict = field(default_factory=dict, repr=False)  # alpha -> mean RMSE per lambda
    cv_lambdas: dict = field(default_factory=dict, repr=False)

    def predict(self, X) -> np.ndarray:
        return self.intercept + np.asarray(X, dtype=np.float64) @ self.coefficients


@dataclass(frozen=True, eq=False)
class Standardization:
    means: np.ndarray
    scales: np.ndarray
    constant: np.ndarray
    y_mean: float

    def apply(self, X) -> np.ndarray:
        Z = (np.asarray(X, dtype=np.float64) - self.means) / self.scales
        Z[:, self.constant] = 0.0
        return Z


def standardize(X, y) -> tuple[np.ndarray, np.ndarray, Standardization]:
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] == 0 or X.shape[1] == 0:
        raise ShapeError("X must be a non-empty 2-d matrix")
    if y.shape != (X.shape[0],):
        raise ShapeError(f"y has shape {y.shape}, expected ({X.shape[0]},)")
    means = X.mean(axis=0)
    constant = np.ptp(X, axis=0) == 0.0
    scales = np.where(constant, 1.0, X.std(axis=0))
    st = Standardization(means, scales, constant, float(y.mean()))
    return st.apply(X), y - st.y_mean, st


def lambda_max(X, y, alpha: float) -> float:
    """Smallest lambda whose solution is identically zero.

    ``X`` must already be standardized (denominator n) and ``y`` centered.
    """
    if alpha <= 0.0:
        raise UnboundedError("alpha = 0 is pure ridge; no finite lambda zeroes the solution")
    X = np.asarray(X, dtype=np.float64)
    n = X.shape[0]
    return float(np.max(np.abs(X.T @ np.asarray(y, dtype=np.float64))) / (n * alpha))


def soft_threshold(z, t):
    return np.sign(z) * np.maximum(np.abs(z) - t, 0.0)


@numba.njit(cache=True, nogil=True)
def _cd_solve(G, c, skip, beta, grad, lam, alpha, tol, max_sweeps):
    """Cyclic coordinate descent at one lambda with gradient (covariance) updates.

    ``grad`` holds c - G @ beta and is updated in place together with ``beta``.
    Returns (sweeps used, last max abs change); sweeps > max_sweeps signals
    non-convergence.
    """
    p = beta.shape[0]
    l1 = lam * alpha
    l2 = lam * (1.0 - alpha)
    max_change = 0.0
    for sweep in range(1, max_sweeps + 1):
        max_change = 0.0
        for j in range(p):
            if skip[j]:
                continue
            old = beta[j]
            z = grad[j] + G[j, j] * old
            if z > l1:
                new = (z - l1) / (G[j, j] + l2)
            elif z < -l1:
                new = (z + l1) / (G[j, j] + l2)
            else:
                new = 0.0
            delta = new - old
            if delta != 0.0:
                beta[j] = new
                for k in range(p):
                    grad[k] -= delta * G[k, j]
                if abs(delta) > max_change:
                    max_change = abs(delta)
        if max_change < tol:
            return sweep, max_change
    return max_sweeps + 1, max_change


@numba.njit(cache=True, nogil=True)
def _cd_path(G, c, skip, lambdas, alpha, tol, max_sweeps):
    p = c.shape[0]
    L = lambdas.shape[0]
    out = np.zeros((p, L))
    sweeps = np.zeros(L, dtype=np.int64)
    beta = np.zeros(p)
    grad = c.copy()
    for l in range(L):
        used, change = _cd_solve(G, c, skip, beta, grad, lambdas[l], alpha, tol, max_sweeps)
        sweeps[l] = used
        if used > max_sweeps:
            return out, sweeps, l, change
        out[:, l] = beta
    return out, sweeps, -1, 0.0


def objective(Xs, yc, beta, lam, alpha) -> float:
    n = Xs.shape[0]
    r = yc - Xs @ beta
    return float(r @ r / (2 * n) + lam * alpha * np.abs(beta).sum() + 0.5 * lam * (1 - alpha) * beta @ beta)


def lambda_grid(lmax: float, gamma: float, length: int) -> np.ndarray:
    if lmax <= 0.0:
        return np.zeros(1)
    if length == 1:
        return np.array([lmax])
    return np.geomspace(lmax, gamma * lmax, length)


def fit_path(X, y, config: EnetConfig, alpha: float, lambdas=None) -> EnetPath:
    """Solve along a descending lambda path with warm starts.

    When ``lambdas`` is None the grid runs log-spaced from lambda_max down to
    gamma * lambda_max.
    """
    Xs, yc, st = standardize(X, y)
    n, p = Xs.shape
    lmax = lambda_max(Xs, yc, alpha)
    if lambdas is None:
        lambdas = lambda_grid(lmax, config.gamma, config.path_length)
    lambdas = np.asarray(lambdas, dtype=np.float64)
    G = (Xs.T @ Xs) / n
    c = (Xs.T @ yc) / n
    coefs, sweeps, failed, change = _cd_path(
        G, c, st.constant, lambdas, float(alpha), float(config.tolerance), int(config.max_iters)
    )
    if failed >= 0:
        raise ConvergenceError(
            f"coordinate descent did not converge at lambda index {failed} "
            f"(lambda={lambdas[failed]:.6g}, last max change {change:.3g})",
            lambda_index=int(failed),
            max_change=float(change),
        )
    # at or above lambda_max the exact solution is zero; drop round-off dust
    coefs[:, lambdas >= lmax] = 0.0
    return _to_original_scale(alpha, lambdas, coefs, st, sweeps)


def _to_original_scale(alpha, lambdas, coefs_std, st: Standardization, sweeps) -> EnetPath:
    coefs = coefs_std / st.scales[:, None]
    coefs[st.constant] = 0.0
    intercepts = st.y_mean - st.means @ coefs
    active = np.count_nonzero(coefs, axis=0)
    return EnetPath(float(alpha), lambdas, coefs, intercepts, active, sweeps)


def _target_arrays(y):
    if isinstance(y, TransformedTarget):
        return y.y, y.raw_rates, True
    y = np.asarray(y, dtype=np.float64)
    return y, y, False


def tune(
    X,
    y,
    config: EnetConfig,
    folds: int = 10,
    seed: int = 42,
    names=None,
) -> EnetModel:
    """Pick (alpha, lambda) by k-fold CV and refit on all rows.

    Each alpha uses one lambda grid derived from the full data so fold errors
    line up by index. With a ``TransformedTarget`` the error is measured on the
    rate scale after the inverse logit. Ties go to the larger lambda, then the
    smaller alpha.
    """
    X = np.asarray(X, dtype=np.float64)
    fit_y, actual, rate_scale = _target_arrays(y)
    n, p = X.shape
    names = tuple(names) if names is not None else tuple(f"x{j}" for j in range(p))
    assignment = make_folds(n, folds, seed)
    Xs_full, yc_full, _ = standardize(X, fit_y)

    best = None  # (rmse, -lambda, alpha, alpha_pos, lambda_index)
    cv_mean, cv_lambdas = {}, {}
    for a_pos, alpha in enumerate(config.alpha_grid):
        lambdas = lambda_grid(lambda_max(Xs_full, yc_full, alpha), config.gamma, config.path_length)
        sq = np.zeros((folds, lambdas.size))
        for fold in range(folds):
            train, test = assignment.train_test(fold)
            path = fit_path(X[train], fit_y[train], config, alpha, lambdas)
            pred = path.predict(X[test])
            if rate_scale:
                pred = inverse_logit(pred)
            err = pred - actual[test][:, None]
            sq[fold] = np.sqrt(np.mean(err * err, axis=0))
        mean = sq.sum(axis=0) / folds
        cv_mean[alpha] = mean
        cv_lambdas[alpha] = lambdas
        for li in range(lambdas.size):
            key = (mean[li], -lambdas[li], alpha)
            if best is None or key < best[0]:
                best = (key, a_pos, li)

    (score, _, alpha), _, li = best
    path = fit_path(X, fit_y, config, alpha, cv_lambdas[alpha])
    coef = path.coefficients[:, li].copy()
    return EnetModel(
        alpha=alpha,
        lambda_=float(cv_lambdas[alpha][li]),
        coefficients=coef,
        intercept=float(path.intercepts[li]),
        active_set=[names[j] for j in np.flatnonzero(coef)],
        cv_rmse=float(score),
        feature_names=names,
        path=path,
        cv_mean=cv_mean,
        cv_lambdas=cv_lambdas,
    )


def fit_at(X, y, config: EnetConfig, alpha: float, lam: float, names=None) -> EnetModel:
    """Fit a single (alpha, lambda), warm-starting down a path from lambda_max."""
    Xs, yc, _ = standardize(X, y)
    lmax = lambda_max(Xs, yc, alpha)
    if lam >= lmax:
        lambdas = np.array([lam])
    else:
        lambdas = np.geomspace(lmax, lam, max(config.path_length, 2))
    path = fit_path(X, y, config, alpha, lambdas)
    coef = path.coefficients[:, -1].copy()
    names = tuple(names) if names is not None else tuple(f"x{j}" for j in range(coef.size))
    return EnetModel(
        alpha=float(alpha),
        lambda_=float(lam),
        coefficients=coef,
        intercept=float(path.intercepts[-1]),
        active_set=[names[j] for j in np.flatnonzero(coef)],
        cv_rmse=float("nan"),
        feature_names=names,
    )


def kkt_check(X, y, model: EnetModel) -> float:
    """Largest violation of the elastic-net stationarity conditions.

    Active j:   (1/n) x_j'r - lam(1-alpha) b_j - lam*alpha*sign(b_j) = 0
    Inactive j: |(1/n) x_j'r| <= lam*alpha
    evaluated on the standardized scale used for fitting.
    """
    fit_y, _, _ = _target_arrays(y)
    Xs, yc, st = standardize(X, fit_y)
    n = Xs.shape[0]
    b = np.asarray(model.coefficients, dtype=np.float64) * st.scales
    b[st.constant] = 0.0
    r = yc - Xs @ b
    grad = Xs.T @ r / n
    lam, alpha = model.lambda_, model.alpha
    active = b != 0.0
    viol = np.zeros_like(b)
    viol[active] = np.abs(grad[active] - lam * (1 - alpha) * b[active] - lam * alpha * np.sign(b[active]))
    inactive = ~active & ~st.constant
    viol[inactive] = np.maximum(np.abs(grad[inactive]) - lam * alpha, 0.0)
    return float(viol.max()) if viol.size else 0.0
