"""Fold assignment and RMSE, shared by the tuners and the CV harness."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import FoldError, ShapeError


@dataclass(frozen=True, eq=False)
class FoldAssignment:
    k: int
    labels: np.ndarray
    seed: int = 0

    def train_test(self, fold: int) -> tuple[np.ndarray, np.ndarray]:
        test = np.flatnonzero(self.labels == fold)
        train = np.flatnonzero(self.labels != fold)
        return train, test

    def sizes(self) -> np.ndarray:
        return np.bincount(self.labels, minlength=self.k)


def make_folds(n: int, k: int, seed: int = 42) -> FoldAssignment:
    """Shuffle ``range(n)`` with a seeded generator and deal it round-robin into k folds."""
    if k < 2:
        raise FoldError(f"need at least 2 folds, got {k}")
    if k > n:
        raise FoldError(f"cannot make {k} folds from {n} rows")
    order = np.random.default_rng(seed).permutation(n)
    labels = np.empty(n, dtype=np.int64)
    labels[order] = np.arange(n) % k
    return FoldAssignment(k, labels, seed)


def rmse(predicted, actual) -> float:
    predicted = np.asarray(predicted, dtype=np.float64)
    actual = np.asarray(actual, dtype=np.float64)
    if predicted.shape != actual.shape:
        raise ShapeError(f"shape mismatch: {predicted.shape} vs {actual.shape}")
    if predicted.size == 0:
        raise ShapeError("rmse of empty vectors")
    diff = predicted - actual
    return float(np.sqrt(np.mean(diff * diff)))
