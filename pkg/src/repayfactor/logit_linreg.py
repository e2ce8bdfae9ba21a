"""Least squares on the log-odds of the repayment rate."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg
from scipy import stats
from scipy.special import expit

from .errors import DomainError, RankError, ShapeError

DEFAULT_EPSILON = 1e-6


@dataclass(frozen=True, eq=False)
class TransformedTarget:
    raw_rates: np.ndarray
    y: np.ndarray
    epsilon: float = DEFAULT_EPSILON

    def __len__(self):
        return self.y.shape[0]

    def subset(self, rows) -> "TransformedTarget":
        return TransformedTarget(self.raw_rates[rows], self.y[rows], self.epsilon)


def logit_transform(p, epsilon: float = DEFAULT_EPSILON) -> TransformedTarget:
    p = np.asarray(p, dtype=np.float64)
    if not 0.0 < epsilon < 0.5:
        raise ValueError("epsilon must lie in (0, 0.5)")
    bad = np.flatnonzero(~((p >= 0.0) & (p <= 1.0)))
    if bad.size:
        raise DomainError(f"rate at index {bad[0]} is {p[bad[0]]}, outside [0, 1]")
    clamped = np.clip(p, epsilon, 1.0 - epsilon)
    y = np.log(clamped) - np.log1p(-clamped)
    return TransformedTarget(p.copy(), y, epsilon)


def inverse_logit(y) -> np.ndarray:
    return expit(np.asarray(y, dtype=np.float64))


@dataclass(frozen=True, eq=False)
class LinearModel:
    intercept: float
    coefficients: np.ndarray
    std_errors: np.ndarray  # intercept first
    t_stats: np.ndarray
    p_values: np.ndarray
    r_squared: float
    residual_variance: float
    names: tuple[str, ...] = ()

    @property
    def n_features(self) -> int:
        return self.coefficients.shape[0]

    def coefficient_table(self) -> list[tuple[str, float, float, float, float]]:
        names = ("(intercept)",) + (self.names or tuple(f"x{j}" for j in range(self.n_features)))
        estimates = np.concatenate([[self.intercept], self.coefficients])
        return [
            (names[k], float(estimates[k]), float(self.std_errors[k]), float(self.t_stats[k]), float(self.p_values[k]))
            for k in range(estimates.size)
        ]


def fit_ols(X, y, names=None, rank_tol: float = 1e-10) -> LinearModel:
    """Ordinary least squares with an intercept, solved by pivoted QR.

    Standard errors use the residual variance with n - d - 1 degrees of
    freedom; p-values are two-sided t-tests.
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if X.ndim == 1:
        X = X[:, None]
    n, d = X.shape
    if y.shape != (n,):
        raise ShapeError(f"y has shape {y.shape}, expected ({n},)")
    if n <= d + 1:
        raise RankError(f"need more than {d + 1} rows for {d} features, got {n}")
    names = tuple(names) if names is not None else tuple(f"x{j}" for j in range(d))

    A = np.column_stack([np.ones(n), X])
    Q, R, piv = scipy.linalg.qr(A, mode="economic", pivoting=True)
    diag = np.abs(np.diag(R))
    rank = int(np.sum(diag > rank_tol * diag[0]))
    if rank < d + 1:
        col = int(piv[rank])
        label = "(intercept)" if col == 0 else names[col - 1]
        raise RankError(f"design is rank deficient; column {label!r} is linearly dependent on the others")

    qty = Q.T @ y
    beta_piv = scipy.linalg.solve_triangular(R, qty)
    beta = np.empty(d + 1)
    beta[piv] = beta_piv

    fitted = A @ beta
    resid = y - fitted
    dof = n - d - 1
    rss = float(resid @ resid)
    sigma2 = rss / dof
    yc = y - y.mean()
    tss = float(yc @ yc)
    r2 = 1.0 - rss / tss if tss > 0.0 else 1.0

    Rinv = scipy.linalg.solve_triangular(R, np.eye(d + 1))
    unscaled = np.empty(d + 1)
    unscaled[piv] = np.einsum("ij,ij->i", Rinv, Rinv)
    se = np.sqrt(sigma2 * unscaled)
    with np.errstate(divide="ignore", invalid="ignore"):
        t = np.where(se > 0.0, beta / se, np.where(beta == 0.0, 0.0, np.inf * np.sign(beta)))
    pvals = 2.0 * stats.t.sf(np.abs(t), dof)
    return LinearModel(
        intercept=float(beta[0]),
        coefficients=beta[1:].copy(),
        std_errors=se,
        t_stats=t,
        p_values=pvals,
        r_squared=float(r2),
        residual_variance=sigma2,
        names=names,
    )


def predict_linear(model: LinearModel, X) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 1:
        X = X[:, None]
    if X.shape[1] != model.n_features:
        raise ShapeError(f"X has {X.shape[1]} columns, model was fit on {model.n_features}")
    return model.intercept + X @ model.coefficients


def predict_rates(model: LinearModel, X) -> np.ndarray:
    return inverse_logit(predict_linear(model, X))
