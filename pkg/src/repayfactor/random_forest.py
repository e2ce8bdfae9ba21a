"""Bootstrap ensemble of variance-reduction regression trees."""

from __future__ import annotations

import hashlib
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numba
import numpy as np

from .errors import InsufficientDataError, ShapeError


@dataclass(frozen=True)
class ForestConfig:
    n_trees: int = 20
    mtry: int | None = None  # None -> ceil(p / 3)
    min_leaf: int = 5
    max_depth: int | None = None
    bootstrap: bool = True
    seed: int = 42

    def __post_init__(self):
        if self.n_trees < 1:
            raise ValueError("n_trees must be >= 1")
        if self.min_leaf < 1:
            raise ValueError("min_leaf must be >= 1")
        if self.mtry is not None and self.mtry < 1:
            raise ValueError("mtry must be >= 1")
        if self.max_depth is not None and self.max_depth < 0:
            raise ValueError("max_depth must be >= 0")

    def resolve_mtry(self, p: int) -> int:
        m = math.ceil(p / 3) if self.mtry is None else self.mtry
        if not 1 <= m <= p:
            raise ValueError(f"mtry={m} must lie in [1, {p}]")
        return m


@dataclass(frozen=True, eq=False)
class Tree:
    """Flat array representation; leaves have feature == -1."""

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray
    n_samples: np.ndarray
    impurity_decrease: np.ndarray  # SSE reduction at each internal node

    @property
    def node_count(self) -> int:
        return self.feature.shape[0]

    @property
    def n_leaves(self) -> int:
        return int(np.count_nonzero(self.feature < 0))

    def predict(self, X) -> np.ndarray:
        return _predict_tree(
            np.ascontiguousarray(X, dtype=np.float64),
            self.feature, self.threshold, self.left, self.right, self.value,
        )


@dataclass(frozen=True, eq=False)
class Forest:
    trees: tuple[Tree, ...]
    n_features: int
    config: ForestConfig
    feature_names: tuple[str, ...] = ()

    def predict(self, X) -> np.ndarray:
        return predict(self, X)

    def to_bytes(self) -> bytes:
        """Canonical serialization, used to compare forests bit for bit."""
        chunks = []
        for t in self.trees:
            for arr in (t.feature, t.threshold, t.left, t.right, t.value, t.n_samples, t.impurity_decrease):
                chunks.append(np.ascontiguousarray(arr).tobytes())
        return b"".join(chunks)

    def digest(self) -> str:
        return hashlib.sha256(self.to_bytes()).hexdigest()


@dataclass(frozen=True, eq=False)
class ImportanceReport:
    names: tuple[str, ...]
    mean_importance: np.ndarray
    std_importance: np.ndarray
    rank: np.ndarray  # 1 = most important
    per_tree: np.ndarray  # n_trees x p
    degenerate: bool

    def top(self, k: int) -> list[str]:
        order = np.argsort(self.rank, kind="stable")
        return [self.names[j] for j in order[:k]]


@numba.njit(cache=True, nogil=True)
def _grow(X, y, rows, mtry, min_leaf, max_depth, rng):
    """Greedy depth-first growth; returns flat node arrays.

    Split candidates are midpoints between consecutive distinct values; the
    gain is the exact SSE reduction n_l n_r / n (mean_l - mean_r)^2.  Ties
    go to the lower feature index, then the lower threshold.
    """
    n_total = rows.shape[0]
    p = X.shape[1]
    cap = 2 * n_total + 1
    feature = np.full(cap, -1, np.int64)
    threshold = np.zeros(cap)
    left = np.full(cap, -1, np.int64)
    right = np.full(cap, -1, np.int64)
    value = np.zeros(cap)
    count = np.zeros(cap, np.int64)
    decrease = np.zeros(cap)

    idx = rows.copy()
    # stack of (node id, start, end, depth)
    st_node = np.empty(cap, np.int64)
    st_start = np.empty(cap, np.int64)
    st_end = np.empty(cap, np.int64)
    st_depth = np.empty(cap, np.int64)
    top = 0
    st_node[0] = 0
    st_start[0] = 0
    st_end[0] = n_total
    st_depth[0] = 0
    top = 1
    n_nodes = 1
    pool = np.arange(p)
    vals = np.empty(n_total)
    ys = np.empty(n_total)

    while top > 0:
        top -= 1
        node = st_node[top]
        start = st_start[top]
        end = st_end[top]
        depth = st_depth[top]
        m = end - start
        s = 0.0
        lo = np.inf
        hi = -np.inf
        for i in range(start, end):
            v = y[idx[i]]
            s += v
            if v < lo:
                lo = v
            if v > hi:
                hi = v
        value[node] = s / m
        count[node] = m
        if m < 2 * min_leaf or lo == hi or (max_depth >= 0 and depth >= max_depth):
            continue

        # partial Fisher-Yates: first mtry entries of pool are the sample
        for i in range(mtry):
            j = i + rng.integers(0, p - i)
            tmp = pool[i]
            pool[i] = pool[j]
            pool[j] = tmp

        best_gain = 0.0
        best_f = -1
        best_t = 0.0
        for c in range(mtry):
            f = pool[c]
            for i in range(m):
                vals[i] = X[idx[start + i], f]
            order = np.argsort(vals[:m], kind="mergesort")
            for i in range(m):
                ys[i] = y[idx[start + order[i]]]
            sl = 0.0
            for i in range(m - 1):
                sl += ys[i]
                nl = i + 1
                nr = m - nl
                if nl < min_leaf:
                    continue
                if nr < min_leaf:
                    break
                a = vals[order[i]]
                b = vals[order[i + 1]]
                if a == b:
                    continue
                ml = sl / nl
                mr = (s - sl) / nr
                gain = nl * nr / m * (ml - mr) * (ml - mr)
                t = a + (b - a) / 2.0
                if t >= b:
                    t = a
                if gain > best_gain or (
                    gain == best_gain and gain > 0.0 and (f < best_f or (f == best_f and t < best_t))
                ):
                    best_gain = gain
                    best_f = f
                    best_t = t
        if best_f < 0:
            continue

        # partition idx[start:end] in place, stable on both sides
        nl = 0
        for i in range(start, end):
            if X[idx[i], best_f] <= best_t:
                nl += 1
        tmp_idx = idx[start:end].copy()
        li = start
        ri = start + nl
        for i in range(m):
            r = tmp_idx[i]
            if X[r, best_f] <= best_t:
                idx[li] = r
                li += 1
            else:
                idx[ri] = r
                ri += 1

        feature[node] = best_f
        threshold[node] = best_t
        decrease[node] = best_gain
        lnode = n_nodes
        rnode = n_nodes + 1
        n_nodes += 2
        left[node] = lnode
        right[node] = rnode
        # push right first so the left subtree is built first
        st_node[top] = rnode
        st_start[top] = start + nl
        st_end[top] = end
        st_depth[top] = depth + 1
        top += 1
        st_node[top] = lnode
        st_start[top] = start
        st_end[top] = start + nl
        st_depth[top] = depth + 1
        top += 1

    return (
        feature[:n_nodes].copy(), threshold[:n_nodes].copy(), left[:n_nodes].copy(),
        right[:n_nodes].copy(), value[:n_nodes].copy(), count[:n_nodes].copy(),
        decrease[:n_nodes].copy(),
    )


@numba.njit(cache=True, nogil=True)
def _predict_tree(X, feature, threshold, left, right, value):
    n = X.shape[0]
    out = np.empty(n)
    for i in range(n):
        node = 0
        while feature[node] >= 0:
            if X[i, feature[node]] <= threshold[node]:
                node = left[node]
            else:
                node = right[node]
        out[i] = value[node]
    return out


def _tree_rng(seed: int, tree_index: int) -> np.random.Generator:
    return np.random.default_rng([int(seed) & 0xFFFFFFFFFFFFFFFF, tree_index])


def _build_tree(X, y, config: ForestConfig, mtry: int, tree_index: int) -> Tree:
    n = X.shape[0]
    rng = _tree_rng(config.seed, tree_index)
    if config.bootstrap:
        rows = np.sort(rng.integers(0, n, size=n))
    else:
        rows = np.arange(n)
    max_depth = -1 if config.max_depth is None else int(config.max_depth)
    arrays = _grow(X, y, rows.astype(np.int64), mtry, config.min_leaf, max_depth, rng)
    return Tree(*arrays)


def fit_forest(X, y, config: ForestConfig = ForestConfig(), threads: int = 1, feature_names=None) -> Forest:
    """Fit ``config.n_trees`` regression trees.

    Tree ``i`` draws its bootstrap sample and split candidates from a
    generator seeded with ``(config.seed, i)``, so the result does not depend
    on ``threads``.
    """
    X = np.ascontiguousarray(X, dtype=np.float64)
    y = np.ascontiguousarray(y, dtype=np.float64)
    if X.ndim != 2 or y.shape != (X.shape[0],):
        raise ShapeError(f"X {X.shape} and y {y.shape} do not line up")
    n, p = X.shape
    if n < 2 * config.min_leaf:
        raise InsufficientDataError(f"need at least {2 * config.min_leaf} rows, got {n}")
    mtry = config.resolve_mtry(p)
    if threads > 1 and config.n_trees > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            trees = list(pool.map(lambda i: _build_tree(X, y, config, mtry, i), range(config.n_trees)))
    else:
        trees = [_build_tree(X, y, config, mtry, i) for i in range(config.n_trees)]
    names = tuple(feature_names) if feature_names is not None else tuple(f"x{j}" for j in range(p))
    return Forest(tuple(trees), p, config, names)


def predict(forest: Forest, X) -> np.ndarray:
    X = np.ascontiguousarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != forest.n_features:
        raise ShapeError(f"X has shape {X.shape}, forest expects {forest.n_features} columns")
    total = np.zeros(X.shape[0])
    for tree in forest.trees:
        total += tree.predict(X)
    return total / len(forest.trees)


def importance(forest: Forest) -> ImportanceReport:
    """Mean decrease in impurity, normalized per tree, with spread across trees.

    Trees that never split carry no information and are left out of the mean;
    when no tree splits every importance is 0 and ``degenerate`` is set.
    """
    p = forest.n_features
    per_tree = np.zeros((len(forest.trees), p))
    used = np.zeros(len(forest.trees), dtype=bool)
    for t, tree in enumerate(forest.trees):
        internal = tree.feature >= 0
        if not internal.any():
            continue
        np.add.at(per_tree[t], tree.feature[internal], tree.impurity_decrease[internal])
        total = per_tree[t].sum()
        if total > 0.0:
            per_tree[t] /= total
            used[t] = True
    if used.any():
        mean = per_tree[used].mean(axis=0)
        std = per_tree[used].std(axis=0)
    else:
        mean = np.zeros(p)
        std = np.zeros(p)
    names = forest.feature_names
    order = sorted(range(p), key=lambda j: (-mean[j], names[j]))
    rank = np.empty(p, dtype=np.int64)
    rank[order] = np.arange(1, p + 1)
    return ImportanceReport(names, mean, std, rank, per_tree, not used.any())
