import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from repayfactor.errors import InsufficientDataError, ShapeError
from repayfactor.metrics import rmse
from repayfactor.random_forest import ForestConfig, Tree, fit_forest, importance, predict


def interp_fixture(seed=0, n=20, p=3):
    rng = np.random.default_rng(seed)
    X = rng.permutation(np.arange(n * p, dtype=float)).reshape(n, p)
    return X, rng.standard_normal(n)


def walk(tree: Tree, x):
    node = 0
    while tree.feature[node] >= 0:
        node = tree.left[node] if x[tree.feature[node]] <= tree.threshold[node] else tree.right[node]
    return node


def test_perfect_interpolation():
    X, y = interp_fixture()
    forest = fit_forest(X, y, ForestConfig(n_trees=1, min_leaf=1, bootstrap=False))
    assert rmse(predict(forest, X), y) == 0.0


def test_constant_target():
    X = np.random.default_rng(1).standard_normal((30, 4))
    forest = fit_forest(X, np.full(30, 0.3), ForestConfig(n_trees=5))
    assert all(t.node_count == 1 for t in forest.trees)
    assert np.all(predict(forest, X) == 0.3)
    rep = importance(forest)
    assert rep.degenerate and np.all(rep.mean_importance == 0.0)


def test_single_informative_feature():
    rng = np.random.default_rng(2)
    X = rng.standard_normal((200, 5))
    # every feature is a split candidate, so only x3 can win a split
    rep = importance(fit_forest(X, X[:, 3], ForestConfig(mtry=5, seed=11)))
    assert rep.mean_importance[3] > 0.9
    assert rep.rank[3] == 1 and rep.top(1) == ["x3"]


def test_ensemble_mean_exact():
    rng = np.random.default_rng(3)
    X = rng.standard_normal((60, 4))
    y = X[:, 0] ** 2 + rng.standard_normal(60)
    forest = fit_forest(X, y, ForestConfig(n_trees=2))
    a, b = (t.predict(X) for t in forest.trees)
    assert np.all(predict(forest, X) == (a + b) / 2)


def test_tree_structure_invariants():
    rng = np.random.default_rng(4)
    X = rng.standard_normal((120, 5))
    y = np.sin(X[:, 0]) + X[:, 1] + 0.1 * rng.standard_normal(120)
    cfg = ForestConfig(n_trees=3, min_leaf=4, seed=5)
    forest = fit_forest(X, y, cfg)
    for i, tree in enumerate(forest.trees):
        rows = np.sort(np.random.default_rng([cfg.seed, i]).integers(0, 120, size=120))
        leaf_of = np.array([walk(tree, X[r]) for r in rows])
        for node in range(tree.node_count):
            if tree.feature[node] < 0:
                ys = y[rows[leaf_of == node]]
                assert ys.size == tree.n_samples[node] >= cfg.min_leaf
                assert abs(tree.value[node] - ys.mean()) < 1e-12
            else:
                assert tree.impurity_decrease[node] > 0.0
                assert tree.n_samples[tree.left[node]] > 0 and tree.n_samples[tree.right[node]] > 0


def test_depth_cap():
    X, y = interp_fixture(n=40)
    forest = fit_forest(X, y, ForestConfig(n_trees=1, min_leaf=1, max_depth=0, bootstrap=False))
    assert forest.trees[0].node_count == 1


def test_errors():
    with pytest.raises(InsufficientDataError):
        fit_forest(np.ones((9, 2)), np.arange(9.0), ForestConfig(min_leaf=5))
    X, y = interp_fixture()
    forest = fit_forest(X, y, ForestConfig(n_trees=2, min_leaf=2))
    with pytest.raises(ShapeError):
        predict(forest, np.ones((3, 5)))
    with pytest.raises(ValueError):
        ForestConfig(mtry=9).resolve_mtry(3)


def test_default_mtry():
    assert ForestConfig().resolve_mtry(10) == 4
    assert ForestConfig().resolve_mtry(3) == 1


def test_deterministic_across_threads():
    rng = np.random.default_rng(6)
    X = rng.standard_normal((150, 9))
    y = X[:, 0] - X[:, 4] + rng.standard_normal(150)
    digests = {fit_forest(X, y, ForestConfig(seed=99), threads=t).digest() for t in (1, 3, 8)}
    assert len(digests) == 1
    assert fit_forest(X, y, ForestConfig(seed=100)).digest() not in digests


def test_monotone_fit():
    rng = np.random.default_rng(7)
    X = rng.standard_normal((80, 3))
    y = X @ [1, -1, 0.5] + rng.standard_normal(80)
    fine = fit_forest(X, y, ForestConfig(n_trees=1, min_leaf=1, bootstrap=False))
    coarse = fit_forest(X, y, ForestConfig(n_trees=1, min_leaf=5, bootstrap=False))
    assert rmse(predict(fine, X), y) <= rmse(predict(coarse, X), y)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**31), st.integers(1, 6), st.integers(1, 5))
def test_importance_normalization(seed, p, min_leaf):
    rng = np.random.default_rng(seed)
    n = 40
    X = rng.standard_normal((n, p))
    y = X[:, 0] + rng.standard_normal(n)
    forest = fit_forest(X, y, ForestConfig(n_trees=4, min_leaf=min_leaf, seed=seed))
    rep = importance(forest)
    assert np.all(rep.mean_importance >= 0)
    if not rep.degenerate:
        assert abs(rep.mean_importance.sum() - 1.0) < 1e-10
        for row in rep.per_tree:
            if row.sum() > 0:
                assert abs(row.sum() - 1.0) < 1e-10
    assert sorted(rep.rank.tolist()) == list(range(1, p + 1))
