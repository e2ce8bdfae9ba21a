"""K-fold cross-validation of whole model recipes and the model comparison table."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Protocol

import numpy as np

from . import elastic_net, grouped_pca, logit_linreg, random_forest
from .errors import FoldFitError
from .ingest import FeatureTable
from .logit_linreg import TransformedTarget, inverse_logit, logit_transform
from .metrics import FoldAssignment, make_folds, rmse

__all__ = [
    "FoldAssignment", "make_folds", "rmse", "CvReport", "ValidationCurve",
    "PcaOlsRecipe", "EnetRecipe", "ForestRecipe", "MeanRecipe",
    "cross_validate", "validation_curve", "compare_models",
]


class Fitted(Protocol):
    def predict_rates(self, table: FeatureTable) -> np.ndarray: ...

    def parameters(self) -> list[np.ndarray]: ...


@dataclass(frozen=True)
class PcaOlsRecipe:
    cutoff: float = 0.8
    tag: str = "pca-ols"

    def fit(self, table: FeatureTable, target: TransformedTarget) -> "_FittedPcaOls":
        pca, _ = grouped_pca.fit_grouped_pca(table, self.cutoff)
        Z = grouped_pca.transform(pca, table)
        ols = logit_linreg.fit_ols(Z, target.y, pca.component_names)
        return _FittedPcaOls(pca, ols)


@dataclass(frozen=True, eq=False)
class _FittedPcaOls:
    pca: grouped_pca.GroupedPcaModel
    ols: logit_linreg.LinearModel

    def predict_rates(self, table):
        return logit_linreg.predict_rates(self.ols, grouped_pca.transform(self.pca, table))

    def parameters(self):
        params = [np.array([self.ols.intercept]), self.ols.coefficients]
        for part in self.pca.parts:
            params += [part.means, part.scales, part.loadings]
        return params


@dataclass(frozen=True)
class EnetRecipe:
    alpha: float
    lam: float
    config: elastic_net.EnetConfig = elastic_net.EnetConfig()
    tag: str = "enet"

    def fit(self, table, target):
        model = elastic_net.fit_at(table.values, target.y, self.config, self.alpha, self.lam, table.names)
        return _FittedLinear(model)


@dataclass(frozen=True, eq=False)
class _FittedLinear:
    model: elastic_net.EnetModel

    def predict_rates(self, table):
        return inverse_logit(self.model.predict(table.values))

    def parameters(self):
        return [np.array([self.model.intercept]), self.model.coefficients]


@dataclass(frozen=True)
class ForestRecipe:
    config: random_forest.ForestConfig = random_forest.ForestConfig()
    threads: int = 1
    tag: str = "rf"

    def fit(self, table, target):
        forest = random_forest.fit_forest(table.values, target.y, self.config, self.threads, table.names)
        return _FittedForest(forest)


@dataclass(frozen=True, eq=False)
class _FittedForest:
    forest: random_forest.Forest

    def predict_rates(self, table):
        return inverse_logit(random_forest.predict(self.forest, table.values))

    def parameters(self):
        return [np.frombuffer(self.forest.to_bytes(), dtype=np.uint8)]


@dataclass(frozen=True)
class MeanRecipe:
    """Baseline: predict the training-fold mean rate."""

    tag: str = "mean"

    def fit(self, table, target):
        return _FittedMean(float(np.mean(target.raw_rates)))


@dataclass(frozen=True)
class _FittedMean:
    value: float

    def predict_rates(self, table):
        return np.full(table.shape[0], self.value)

    def parameters(self):
        return [np.array([self.value])]


@dataclass(frozen=True, eq=False)
class CvReport:
    model_tag: str
    per_fold_rmse: np.ndarray
    per_fold_train_rmse: np.ndarray
    folds: FoldAssignment = field(repr=False, default=None)

    @property
    def mean_rmse(self) -> float:
        return float(np.mean(self.per_fold_rmse))

    @property
    def std_rmse(self) -> float:
        return float(np.std(self.per_fold_rmse))

    @property
    def mean_train_rmse(self) -> float:
        return float(np.mean(self.per_fold_train_rmse))

    def to_dict(self) -> dict:
        return {
            "model_tag": self.model_tag,
            "k": self.per_fold_rmse.size,
            "per_fold_rmse": self.per_fold_rmse,
            "per_fold_train_rmse": self.per_fold_train_rmse,
            "mean_rmse": self.mean_rmse,
            "std_rmse": self.std_rmse,
            "fold_labels": self.folds.labels if self.folds is not None else None,
        }


@dataclass(frozen=True, eq=False)
class ValidationCurve:
    cutoffs: np.ndarray
    train_rmse: np.ndarray
    val_rmse: np.ndarray
    component_counts: np.ndarray

    def rows(self):
        return list(zip(self.cutoffs, self.component_counts, self.train_rmse, self.val_rmse))


def _as_target(target) -> TransformedTarget:
    if isinstance(target, TransformedTarget):
        return target
    return logit_transform(target)


def cross_validate(recipe, table: FeatureTable, target, k: int = 10, seed: int = 42) -> CvReport:
    """Refit the whole recipe on each training fold and score the held-out rows.

    Everything the recipe learns, PCA and standardization included, comes
    from training rows only.  Errors are on the rate scale.
    """
    target = _as_target(target)
    folds = make_folds(table.shape[0], k, seed)
    val = np.empty(k)
    train_err = np.empty(k)
    for fold in range(k):
        train, test = folds.train_test(fold)
        try:
            fitted = recipe.fit(table.select_rows(train), target.subset(train))
            val[fold] = rmse(fitted.predict_rates(table.select_rows(test)), target.raw_rates[test])
            train_err[fold] = rmse(fitted.predict_rates(table.select_rows(train)), target.raw_rates[train])
        except Exception as exc:
            raise FoldFitError(fold, exc) from exc
    return CvReport(recipe.tag, val, train_err, folds)


def validation_curve(table: FeatureTable, target, cutoffs, k: int = 10, seed: int = 42) -> ValidationCurve:
    target = _as_target(target)
    cutoffs = np.array(sorted(float(c) for c in cutoffs))
    train, val, counts = [], [], []
    for c in cutoffs:
        report = cross_validate(PcaOlsRecipe(c), table, target, k, seed)
        train.append(report.mean_train_rmse)
        val.append(report.mean_rmse)
        model, _ = grouped_pca.fit_grouped_pca(table, c)
        counts.append(model.n_components)
    return ValidationCurve(cutoffs, np.array(train), np.array(val), np.array(counts, dtype=np.int64))


def compare_models(reports) -> list[tuple[str, float, float]]:
    reports = list(reports)
    if not reports:
        raise ValueError("no reports to compare")
    rows = [(r.model_tag, r.mean_rmse, r.std_rmse) for r in reports]
    return sorted(rows, key=lambda row: (row[1], row[0]))
