"""Independent PCA per feature category with an explained-variance cutoff."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InsufficientDataError, SchemaError
from .ingest import Category, FeatureTable

# concatenation order of category blocks; Repayment only appears if the
# caller did not strip it
CATEGORY_ORDER = (
    Category.SCHOOL,
    Category.ADMISSION,
    Category.ACADEMICS,
    Category.STUDENT,
    Category.COST,
    Category.AID,
    Category.COMPLETION,
    Category.EARNINGS,
    Category.REPAYMENT,
)

SCALE_FLOOR = 1e-12
_CUTOFF_SLACK = 1e-12


@dataclass(frozen=True, eq=False)
class CategoryPca:
    category: Category
    feature_names: tuple[str, ...]
    columns: np.ndarray  # positions in the training table
    means: np.ndarray
    scales: np.ndarray
    constant: np.ndarray  # zero-variance columns, standardized to 0
    loadings: np.ndarray  # p_k x m_k
    explained_ratio: np.ndarray  # retained components only
    spectrum: np.ndarray  # full explained-variance ratios

    @property
    def n_components(self) -> int:
        return self.loadings.shape[1]

    def standardize(self, block: np.ndarray) -> np.ndarray:
        Z = (block - self.means) / self.scales
        Z[:, self.constant] = 0.0
        return Z


@dataclass(frozen=True, eq=False)
class GroupedPcaModel:
    cutoff: float
    feature_names: tuple[str, ...]
    parts: tuple[CategoryPca, ...]

    @property
    def component_names(self) -> list[str]:
        return [
            f"{part.category.value}_PC{i + 1}"
            for part in self.parts
            for i in range(part.n_components)
        ]

    @property
    def n_components(self) -> int:
        return sum(part.n_components for part in self.parts)

    def counts(self) -> dict[str, int]:
        return {part.category.value: part.n_components for part in self.parts}


@dataclass(frozen=True)
class ScreeData:
    # category label -> list of (component index, ratio, cumulative ratio)
    spectra: dict[str, list[tuple[int, float, float]]]
    retained: dict[str, int]


def n_components_for(ratios: np.ndarray, cutoff: float) -> int:
    """Smallest m whose cumulative explained ratio reaches ``cutoff``."""
    if ratios.size == 0 or ratios.sum() == 0.0:
        return 0
    cum = np.cumsum(ratios)
    hits = np.flatnonzero(cum >= cutoff - _CUTOFF_SLACK)
    return int(hits[0]) + 1 if hits.size else int(ratios.size)


def _fix_signs(vectors: np.ndarray) -> np.ndarray:
    if vectors.size == 0:
        return vectors
    idx = np.argmax(np.abs(vectors), axis=0)
    signs = np.sign(vectors[idx, np.arange(vectors.shape[1])])
    signs[signs == 0] = 1.0
    return vectors * signs


def _fit_category(category, names, columns, block, cutoff) -> CategoryPca:
    n = block.shape[0]
    means = block.mean(axis=0)
    std = block.std(axis=0, ddof=1)
    constant = np.ptp(block, axis=0) == 0.0
    scales = np.maximum(std, SCALE_FLOOR)
    Z = (block - means) / scales
    Z[:, constant] = 0.0
    if constant.all():
        p_k = block.shape[1]
        return CategoryPca(
            category, names, columns, means, scales, constant,
            np.zeros((p_k, 0)), np.zeros(0), np.zeros(0),
        )
    _, s, vt = np.linalg.svd(Z, full_matrices=False)
    eig = s**2 / (n - 1)
    ratios = eig / eig.sum()
    m = n_components_for(ratios, cutoff)
    loadings = _fix_signs(vt[:m].T.copy())
    return CategoryPca(
        category, names, columns, means, scales, constant,
        loadings, ratios[:m].copy(), ratios,
    )


def fit_grouped_pca(table: FeatureTable, c: float = 0.8) -> tuple[GroupedPcaModel, ScreeData]:
    """Fit one correlation-matrix PCA per category present in ``table``."""
    if not 0.0 < c <= 1.0:
        raise ValueError("cutoff must lie in (0, 1]")
    n, _ = table.shape
    if n < 2:
        raise InsufficientDataError(f"PCA needs at least 2 rows, got {n}")
    parts = []
    for category in CATEGORY_ORDER:
        cols = np.array([j for j, m in enumerate(table.metas) if m.category is category], dtype=int)
        if cols.size == 0:
            continue
        names = tuple(table.metas[j].name for j in cols)
        parts.append(_fit_category(category, names, cols, table.values[:, cols], c))
    model = GroupedPcaModel(c, tuple(table.names), tuple(parts))
    spectra = {}
    for part in parts:
        cum = np.cumsum(part.spectrum)
        spectra[part.category.value] = [
            (i + 1, float(r), float(cum[i])) for i, r in enumerate(part.spectrum)
        ]
    return model, ScreeData(spectra, model.counts())


def _check_schema(model: GroupedPcaModel, table: FeatureTable):
    names = table.names
    for i, expected in enumerate(model.feature_names):
        if i >= len(names) or names[i] != expected:
            got = names[i] if i < len(names) else "<none>"
            raise SchemaError(f"feature {i} is {got!r}, model expects {expected!r}")
    if len(names) != len(model.feature_names):
        raise SchemaError(f"unexpected extra feature {names[len(model.feature_names)]!r}")


def transform(model: GroupedPcaModel, table: FeatureTable) -> np.ndarray:
    _check_schema(model, table)
    blocks = [
        part.standardize(table.values[:, part.columns]) @ part.loadings
        for part in model.parts
    ]
    if not blocks:
        return np.zeros((table.shape[0], 0))
    return np.hstack(blocks)


def inverse_transform(model: GroupedPcaModel, components: np.ndarray) -> np.ndarray:
    """Map component scores back to standardized feature space."""
    p = len(model.feature_names)
    out = np.zeros((components.shape[0], p))
    start = 0
    for part in model.parts:
        m = part.n_components
        out[:, part.columns] = components[:, start:start + m] @ part.loadings.T
        start += m
    return out


def scree_export(data: ScreeData) -> list[tuple[str, int, float, float, bool]]:
    rows = []
    for category, spectrum in data.spectra.items():
        keep = data.retained[category]
        for index, ratio, cumulative in spectrum:
            rows.append((category, index, ratio, cumulative, index <= keep))
    return rows
