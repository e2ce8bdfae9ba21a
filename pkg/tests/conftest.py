import numpy as np
import pytest

from repayfactor.ingest import Category, FeatureMeta, FeatureTable
from repayfactor.synthetic import generate


def make_table(values, names=None, categories=None, missing=None, years=None) -> FeatureTable:
    """Numeric FeatureTable from a dense matrix; every column defaults to School."""
    values = np.asarray(values, dtype=np.float64)
    if values.ndim == 1:
        values = values[:, None]
    n, p = values.shape
    names = names or [f"f{j:02d}" for j in range(p)]
    if categories is None:
        categories = [Category.SCHOOL] * p
    elif isinstance(categories, Category):
        categories = [categories] * p
    metas = tuple(FeatureMeta(nm, cat) for nm, cat in zip(names, categories))
    if missing is None:
        missing = np.zeros((n, p), dtype=bool)
    years = years or [2010] * n
    keys = tuple((str(1000 + i), years[i]) for i in range(n))
    return FeatureTable(values, missing, metas, keys)


@pytest.fixture(scope="session")
def small_panel(tmp_path_factory):
    """200-row synthetic panel written to disk with its recorded truth."""
    out = tmp_path_factory.mktemp("panel")
    panel = generate(seed=0, n_institutions=25)
    paths = panel.write(out)
    return panel, paths


# acceptance verdicts, printed as one line per criterion after the run
ACCEPTANCE: list[tuple[str, str, str]] = []


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for name, status, detail in ACCEPTANCE:
        terminalreporter.write_line(f"{status:6s} {name}: {detail}")
