"""Loading, merging and cleaning of yearly category-tagged CSV panels."""

from __future__ import annotations

import csv
import enum
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import (
    DictionaryError,
    DuplicateError,
    EmptyTableError,
    ParseError,
    SchemaError,
    UnknownVariableError,
)

MISSING_SENTINELS = frozenset({"PrivacySuppressed", "NULL", ""})
DEFAULT_ID_COLUMN = "UNITID"


class Category(str, enum.Enum):
    REPAYMENT = "Repayment"
    SCHOOL = "School"
    ACADEMICS = "Academics"
    ADMISSION = "Admission"
    COST = "Cost"
    STUDENT = "Student"
    COMPLETION = "Completion"
    AID = "Aid"
    EARNINGS = "Earnings"

    @classmethod
    def parse(cls, label: str) -> "Category":
        key = label.strip().lower()
        # the source documentation uses both spellings
        if key == "admissions":
            key = "admission"
        for member in cls:
            if member.value.lower() == key:
                return member
        raise ValueError(label)


@dataclass(frozen=True)
class FeatureMeta:
    name: str
    category: Category
    dtype: str = "numeric"
    encoding: tuple[str, ...] | None = None

    def __post_init__(self):
        if self.dtype not in ("numeric", "categorical"):
            raise ValueError(f"unknown dtype {self.dtype!r} for {self.name}")
        if (self.dtype == "categorical") != (self.encoding is not None):
            raise ValueError(f"{self.name}: encoding is required iff dtype is categorical")

    def decode(self, code: float) -> str:
        return self.encoding[int(code)]


@dataclass(frozen=True)
class RawTable:
    header: tuple[str, ...]
    rows: list[tuple[str, ...]]
    year: int
    source: str = ""


@dataclass(frozen=True, eq=False)
class FeatureTable:
    """Dense numeric panel with a parallel missingness mask.

    ``values`` and ``missing`` are n x p; missing cells hold 0.0.  Arrays are
    marked read-only so a table can be shared across threads.
    """

    values: np.ndarray
    missing: np.ndarray
    metas: tuple[FeatureMeta, ...]
    row_keys: tuple[tuple[str, int], ...]
    _index: dict = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        values = np.array(self.values, dtype=np.float64, copy=True)
        missing = np.array(self.missing, dtype=bool, copy=True)
        if values.ndim != 2:
            values = values.reshape(len(self.row_keys), len(self.metas))
            missing = missing.reshape(values.shape)
        if values.shape != missing.shape:
            raise SchemaError("values and missing mask differ in shape")
        if values.shape != (len(self.row_keys), len(self.metas)):
            raise SchemaError(
                f"matrix shape {values.shape} does not match "
                f"{len(self.row_keys)} row keys x {len(self.metas)} features"
            )
        values[missing] = 0.0
        values.flags.writeable = False
        missing.flags.writeable = False
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "missing", missing)
        object.__setattr__(self, "metas", tuple(self.metas))
        object.__setattr__(self, "row_keys", tuple((str(i), int(y)) for i, y in self.row_keys))
        index = {}
        for j, meta in enumerate(self.metas):
            if meta.name in index:
                raise DuplicateError(f"duplicate feature name {meta.name!r}")
            index[meta.name] = j
        if len(set(self.row_keys)) != len(self.row_keys):
            raise DuplicateError("row keys are not unique")
        object.__setattr__(self, "_index", index)

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape

    @property
    def names(self) -> list[str]:
        return [m.name for m in self.metas]

    @property
    def categories(self) -> list[Category]:
        return [m.category for m in self.metas]

    def index_of(self, name: str) -> int:
        try:
            return self._index[name]
        except KeyError:
            raise UnknownVariableError(f"unknown variable {name!r}") from None

    def meta(self, name: str) -> FeatureMeta:
        return self.metas[self.index_of(name)]

    def column(self, name: str) -> np.ndarray:
        return self.values[:, self.index_of(name)]

    def select_columns(self, columns: Sequence[int]) -> "FeatureTable":
        columns = list(columns)
        return FeatureTable(
            self.values[:, columns],
            self.missing[:, columns],
            tuple(self.metas[j] for j in columns),
            self.row_keys,
        )

    def select_rows(self, rows: Sequence[int] | np.ndarray) -> "FeatureTable":
        rows = np.asarray(rows)
        if rows.dtype == bool:
            rows = np.flatnonzero(rows)
        return FeatureTable(
            self.values[rows],
            self.missing[rows],
            self.metas,
            tuple(self.row_keys[i] for i in rows),
        )

    def sorted_by_key(self) -> "FeatureTable":
        order = sorted(range(len(self.row_keys)), key=lambda i: self.row_keys[i])
        return self.select_rows(order)

    def equals(self, other: "FeatureTable") -> bool:
        return (
            self.metas == other.metas
            and self.row_keys == other.row_keys
            and np.array_equal(self.values, other.values)
            and np.array_equal(self.missing, other.missing)
        )


def load_dictionary(path) -> list[FeatureMeta]:
    """Read a ``name,category[,dtype]`` data dictionary."""
    metas: list[FeatureMeta] = []
    seen: set[str] = set()
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DictionaryError(f"{path}: missing header row") from None
        if len(header) < 2:
            raise DictionaryError(f"{path}: expected at least two columns")
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not cell.strip() for cell in row):
                continue
            if len(row) < 2:
                raise DictionaryError(f"{path}: row {lineno} has fewer than two cells")
            name = row[0].strip()
            try:
                category = Category.parse(row[1])
            except ValueError:
                raise DictionaryError(
                    f"{path}: row {lineno} ({name}) has unknown category {row[1]!r}"
                ) from None
            dtype = row[2].strip().lower() if len(row) > 2 and row[2].strip() else "numeric"
            if dtype not in ("numeric", "categorical"):
                raise DictionaryError(f"{path}: row {lineno} ({name}) has unknown dtype {row[2]!r}")
            if name in seen:
                raise DuplicateError(f"{path}: duplicate variable {name!r} on row {lineno}")
            seen.add(name)
            encoding = () if dtype == "categorical" else None
            metas.append(FeatureMeta(name, category, dtype, encoding))
    return metas


def load_csv(path, year: int) -> RawTable:
    path = Path(path)
    try:
        fh = open(path, newline="", encoding="utf-8-sig")
    except OSError as exc:
        raise OSError(f"cannot read {path}: {exc}") from exc
    with fh:
        reader = csv.reader(fh)
        try:
            header = tuple(next(reader))
        except StopIteration:
            raise ParseError(f"{path}: missing header row") from None
        rows = []
        for i, row in enumerate(reader):
            if len(row) != len(header):
                raise ParseError(
                    f"{path}: row {i} has {len(row)} cells, header has {len(header)}"
                )
            rows.append(tuple(row))
    return RawTable(header, rows, int(year), str(path))


def _parse_float(cell: str) -> float | None:
    try:
        value = float(cell)
    except ValueError:
        return None
    return value if math.isfinite(value) else None


def merge_years(
    tables: Iterable[RawTable],
    dictionary: Sequence[FeatureMeta],
    id_column: str = DEFAULT_ID_COLUMN,
) -> FeatureTable:
    """Stack yearly tables into one row per (institution, year).

    Tables are processed in ascending year so categorical codes do not depend
    on the order the files were passed in.  A numeric column none of whose
    non-sentinel cells parse is treated as free text and dropped.
    """
    tables = sorted(tables, key=lambda t: t.year)
    for t in tables:
        if id_column not in t.header:
            raise SchemaError(f"{t.source or t.year}: missing institution-id column {id_column!r}")

    present = set()
    for t in tables:
        present.update(t.header)
    metas = [m for m in dictionary if m.name in present and m.name != id_column]

    row_keys: list[tuple[str, int]] = []
    cells: dict[str, list[str | None]] = {m.name: [] for m in metas}
    for t in tables:
        id_pos = t.header.index(id_column)
        positions = {m.name: (t.header.index(m.name) if m.name in t.header else None) for m in metas}
        for row in t.rows:
            row_keys.append((row[id_pos].strip(), t.year))
            for name, pos in positions.items():
                cells[name].append(None if pos is None else row[pos])

    if len(set(row_keys)) != len(row_keys):
        raise DuplicateError("duplicate (institution, year) rows across inputs")

    columns, masks, kept = [], [], []
    for meta in metas:
        raw = cells[meta.name]
        miss = np.array([c is None or c.strip() in MISSING_SENTINELS for c in raw], dtype=bool)
        vals = np.zeros(len(raw))
        if meta.dtype == "categorical":
            codes: dict[str, int] = {}
            for i, c in enumerate(raw):
                if miss[i]:
                    continue
                key = c.strip()
                vals[i] = codes.setdefault(key, len(codes))
            meta = replace(meta, encoding=tuple(codes))
        else:
            parsed_any = text_seen = False
            for i, c in enumerate(raw):
                if miss[i]:
                    continue
                v = _parse_float(c.strip())
                if v is None:
                    miss[i] = True
                    text_seen = True
                else:
                    vals[i] = v
                    parsed_any = True
            if text_seen and not parsed_any:
                continue
        columns.append(vals)
        masks.append(miss)
        kept.append(meta)

    if not kept:
        raise EmptyTableError("no dictionary columns survived the merge")
    values = np.column_stack(columns) if row_keys else np.zeros((0, len(kept)))
    missing = np.column_stack(masks) if row_keys else np.zeros((0, len(kept)), dtype=bool)
    return FeatureTable(values, missing, tuple(kept), tuple(row_keys))


def filter_missing(table: FeatureTable, threshold: float = 0.70) -> FeatureTable:
    """Drop features, then rows, whose missing fraction strictly exceeds ``threshold``.

    Dropping rows can push a surviving feature over the threshold, so the two
    passes repeat until nothing changes; the result is a fixed point and
    filtering it again is a no-op.
    """
    if not 0.0 <= threshold <= 1.0:
        raise ValueError("threshold must lie in [0, 1]")
    n, p = table.shape
    if n == 0 or p == 0:
        raise EmptyTableError("cannot filter an empty table")
    out = table
    while True:
        keep_cols = np.flatnonzero(out.missing.mean(axis=0) <= threshold)
        if keep_cols.size == 0:
            raise EmptyTableError(f"every feature exceeds the {threshold:.0%} missing threshold")
        keep_rows = np.flatnonzero(out.missing[:, keep_cols].mean(axis=1) <= threshold)
        if keep_rows.size == 0:
            raise EmptyTableError(f"every row exceeds the {threshold:.0%} missing threshold")
        if keep_cols.size == out.shape[1] and keep_rows.size == out.shape[0]:
            return out
        out = out.select_columns(keep_cols).select_rows(keep_rows)


def write_feature_table(table: FeatureTable, matrix_path, meta_path, id_column: str = DEFAULT_ID_COLUMN):
    """Write the matrix CSV (missing cells left blank) and its metadata sidecar."""
    from ._io import fmt

    with open(matrix_path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([id_column, "YEAR", *table.names])
        for i, (inst, year) in enumerate(table.row_keys):
            row = ["" if table.missing[i, j] else fmt(table.values[i, j]) for j in range(table.shape[1])]
            w.writerow([inst, year, *row])
    with open(meta_path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["name", "category", "dtype", "encoding"])
        for m in table.metas:
            w.writerow([m.name, m.category.value, m.dtype, "|".join(m.encoding) if m.encoding is not None else ""])


def read_feature_table(matrix_path, meta_path=None) -> FeatureTable:
    matrix_path = Path(matrix_path)
    if meta_path is None:
        meta_path = matrix_path.with_name(matrix_path.stem + "_meta.csv")
    metas = []
    with open(meta_path, newline="", encoding="utf-8") as fh:
        for row in csv.DictReader(fh):
            cat = Category.parse(row["category"])
            if row["dtype"] == "categorical":
                enc = tuple(row["encoding"].split("|")) if row["encoding"] else ()
                metas.append(FeatureMeta(row["name"], cat, "categorical", enc))
            else:
                metas.append(FeatureMeta(row["name"], cat))
    raw = load_csv(matrix_path, 0)
    names = list(raw.header[2:])
    if names != [m.name for m in metas]:
        raise SchemaError(f"{matrix_path}: header does not match {meta_path}")
    n, p = len(raw.rows), len(metas)
    values = np.zeros((n, p))
    missing = np.zeros((n, p), dtype=bool)
    keys = []
    for i, row in enumerate(raw.rows):
        keys.append((row[0], int(row[1])))
        for j, cell in enumerate(row[2:]):
            if cell == "":
                missing[i, j] = True
            else:
                values[i, j] = float(cell)
    return FeatureTable(values, missing, tuple(metas), tuple(keys))
