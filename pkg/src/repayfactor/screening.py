"""Target selection, variance/correlation screens and descriptive summaries."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateTargetError, DomainError, LeakageError, ShapeError
from .ingest import Category, FeatureTable


@dataclass(frozen=True)
class ScreeningConfig:
    variance_drop_fraction: float = 0.10
    top_count: int = 500
    target_name: str = "RPY_1YR_RT"

    def __post_init__(self):
        if not 0.0 <= self.variance_drop_fraction < 1.0:
            raise ValueError("variance_drop_fraction must lie in [0, 1)")
        if self.top_count < 1:
            raise ValueError("top_count must be >= 1")


@dataclass(frozen=True)
class ScreenReport:
    target_name: str
    selected: list[tuple[str, float]]
    dropped_by_variance: list[tuple[str, float]]

    def to_dict(self) -> dict:
        return {
            "target_name": self.target_name,
            "selected": [{"name": n, "abs_correlation": c} for n, c in self.selected],
            "dropped_by_variance": [{"name": n, "variance": v} for n, v in self.dropped_by_variance],
        }


@dataclass(frozen=True)
class QuantileSummary:
    name: str
    min: float
    q1: float
    median: float
    q3: float
    max: float
    count: int

    @property
    def empty(self) -> bool:
        return self.count == 0


def select_target(table: FeatureTable, name: str) -> tuple[np.ndarray, FeatureTable]:
    """Split off the target rate and strip every Repayment column from the predictors.

    Rows where the target is missing are removed from both outputs rather than
    zero-filled.
    """
    j = table.index_of(name)
    if table.metas[j].category is not Category.REPAYMENT:
        raise LeakageError(
            f"{name} is in category {table.metas[j].category.value}; the target must be a Repayment variable"
        )
    keep_rows = np.flatnonzero(~table.missing[:, j])
    target = table.values[keep_rows, j].copy()
    bad = np.flatnonzero((target < 0.0) | (target > 1.0))
    if bad.size:
        raise DomainError(f"{name} row {keep_rows[bad[0]]} = {target[bad[0]]} is not a rate in [0, 1]")
    predictors = [k for k, m in enumerate(table.metas) if m.category is not Category.REPAYMENT]
    return target, table.select_rows(keep_rows).select_columns(predictors)


def _drop_count(fraction: float, p: int) -> int:
    # guard against 0.29 * 100 = 28.999999999999996
    return int(math.floor(fraction * p + 1e-9))


def variance_screen(table: FeatureTable, a: float) -> tuple[FeatureTable, list[tuple[str, float]]]:
    if not 0.0 <= a < 1.0:
        raise ValueError("a must lie in [0, 1)")
    n, p = table.shape
    if p == 0 or n < 2:
        return table, []
    variances = table.values.var(axis=0, ddof=1)
    names = table.names
    k = _drop_count(a, p)
    order = sorted(range(p), key=lambda j: (variances[j], names[j]))
    drop = set(order[:k])
    dropped = [(names[j], float(variances[j])) for j in order[:k]]
    keep = [j for j in range(p) if j not in drop]
    return table.select_columns(keep), dropped


def pearson_with(matrix: np.ndarray, target: np.ndarray) -> np.ndarray:
    """Column-wise Pearson correlation; constant columns get 0."""
    X = np.asarray(matrix, dtype=np.float64)
    y = np.asarray(target, dtype=np.float64)
    if X.shape[0] != y.shape[0]:
        raise ShapeError(f"target has {y.shape[0]} rows, table has {X.shape[0]}")
    if y.size < 2 or np.ptp(y) == 0.0:
        raise DegenerateTargetError("target has zero variance")
    yc = y - y.mean()
    ynorm = math.sqrt(float(yc @ yc))
    Xc = X - X.mean(axis=0)
    norms = np.sqrt(np.einsum("ij,ij->j", Xc, Xc))
    constant = np.ptp(X, axis=0) == 0.0 if X.size else np.ones(X.shape[1], bool)
    safe = np.where(constant, 1.0, norms)
    r = (Xc.T @ yc) / (safe * ynorm)
    r[constant] = 0.0
    return np.clip(r, -1.0, 1.0)


def correlation_screen(
    table: FeatureTable, target: np.ndarray, b: int
) -> tuple[FeatureTable, ScreenReport]:
    """Keep the ``b`` features with the largest absolute correlation to ``target``.

    The returned table keeps the original column order; ``report.selected``
    is in rank order (|r| descending, then name).
    """
    if b < 1:
        raise ValueError("b must be >= 1")
    r = pearson_with(table.values, target)
    names = table.names
    order = sorted(range(len(names)), key=lambda j: (-abs(r[j]), names[j]))[:b]
    report = ScreenReport(
        target_name="",
        selected=[(names[j], float(abs(r[j]))) for j in order],
        dropped_by_variance=[],
    )
    return table.select_columns(sorted(order)), report


def screen(
    table: FeatureTable, target: np.ndarray, config: ScreeningConfig
) -> tuple[FeatureTable, ScreenReport]:
    """Variance screen followed by correlation screen."""
    reduced, dropped = variance_screen(table, config.variance_drop_fraction)
    out, report = correlation_screen(reduced, target, config.top_count)
    return out, ScreenReport(config.target_name, report.selected, dropped)


def summarize_rates(table: FeatureTable, names: list[str]) -> list[QuantileSummary]:
    out = []
    for name in names:
        j = table.index_of(name)
        vals = table.values[~table.missing[:, j], j]
        if vals.size == 0:
            nan = float("nan")
            out.append(QuantileSummary(name, nan, nan, nan, nan, nan, 0))
            continue
        q = np.quantile(vals, [0.0, 0.25, 0.5, 0.75, 1.0], method="linear")
        out.append(QuantileSummary(name, *(float(v) for v in q), int(vals.size)))
    return out


def correlation_heatmap(
    table: FeatureTable, target: np.ndarray, k: int = 20
) -> tuple[np.ndarray, list[str]]:
    p = table.shape[1]
    if not 1 <= k <= p:
        raise ValueError(f"k must lie in [1, {p}]")
    r = pearson_with(table.values, target)
    names = table.names
    top = sorted(range(p), key=lambda j: (-abs(r[j]), names[j]))[:k]
    X = table.values[:, top]
    Xc = X - X.mean(axis=0)
    norms = np.sqrt(np.einsum("ij,ij->j", Xc, Xc))
    constant = np.ptp(X, axis=0) == 0.0
    safe = np.where(constant, 1.0, norms)
    M = (Xc.T @ Xc) / np.outer(safe, safe)
    M[constant, :] = 0.0
    M[:, constant] = 0.0
    M = np.clip((M + M.T) / 2.0, -1.0, 1.0)
    np.fill_diagonal(M, 1.0)
    return M, [names[j] for j in top]
