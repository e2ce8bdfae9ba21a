"""Synthetic scorecard-like panels with a planted sparse log-odds model.

The generator writes yearly CSVs and a data dictionary in the same layout the
real inputs use, and records the stage counts the pipeline must reproduce.

    python -m repayfactor.synthetic --out demo --seed 0
"""

from __future__ import annotations

import argparse
import csv
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.special import expit

from .ingest import Category

PREDICTOR_CATEGORIES = (
    Category.SCHOOL,
    Category.ADMISSION,
    Category.ACADEMICS,
    Category.STUDENT,
    Category.COST,
    Category.AID,
    Category.COMPLETION,
    Category.EARNINGS,
)
TARGET = "RPY_1YR_RT"
REPAYMENT_COLUMNS = ("RPY_1YR_RT", "RPY_3YR_RT", "RPY_5YR_RT", "RPY_7YR_RT")
CONTROL_LEVELS = ("Public", "Private nonprofit", "Private for-profit")


@dataclass
class SyntheticPanel:
    header: list[str]
    rows_by_year: dict[int, list[list[str]]]
    dictionary: list[tuple[str, str, str]]
    truth: dict

    def write(self, out_dir) -> dict:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        inputs = []
        for year, rows in sorted(self.rows_by_year.items()):
            path = out / f"MERGED{year}_PP.csv"
            with open(path, "w", newline="", encoding="utf-8") as fh:
                w = csv.writer(fh, lineterminator="\n")
                w.writerow(self.header)
                w.writerows(rows)
            inputs.append(str(path))
        dict_path = out / "dictionary.csv"
        with open(dict_path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["name", "category", "dtype"])
            w.writerows(self.dictionary)
        truth_path = out / "truth.json"
        truth_path.write_text(json.dumps(self.truth, indent=2, sort_keys=True) + "\n")
        return {"inputs": inputs, "dictionary": str(dict_path), "truth": str(truth_path)}


def generate(
    seed: int = 0,
    n_institutions: int = 250,
    years=range(2007, 2015),
    per_category: int = 15,
    n_true: int = 10,
    n_low_variance: int | None = None,
    heavy_missing_rows: int | None = None,
    target_missing_rows: int | None = None,
    within_category_corr: float = 0.5,
    effect: float = 0.3,
    noise: float = 0.15,
    sprinkle: float = 0.002,
) -> SyntheticPanel:
    rng = np.random.default_rng(seed)
    years = list(years)
    n = n_institutions * len(years)
    n_cat = len(PREDICTOR_CATEGORIES)
    p = n_cat * per_category
    if n_low_variance is None:
        n_low_variance = p // 10
    if heavy_missing_rows is None:
        heavy_missing_rows = max(1, n // 100)
    if target_missing_rows is None:
        target_missing_rows = max(1, (3 * n) // 200)

    names, cats = [], []
    for k, cat in enumerate(PREDICTOR_CATEGORIES):
        for i in range(per_category):
            if cat is Category.SCHOOL and i == 0:
                names.append("CONTROL")
            else:
                names.append(f"{cat.value.upper()[:4]}_V{i + 1:02d}")
            cats.append(k)
    cats = np.array(cats)

    # latent category factor plus idiosyncratic noise
    factors = rng.standard_normal((n, n_cat))
    idio = rng.standard_normal((n, p))
    rho = within_category_corr
    Z = rho * factors[:, cats] + np.sqrt(1 - rho**2) * idio

    numeric = [j for j in range(p) if names[j] != "CONTROL"]
    low_var = sorted(rng.choice(numeric, size=n_low_variance, replace=False).tolist())
    candidates = [j for j in numeric if j not in set(low_var)]
    # spread the informative features over the categories
    true_idx = []
    by_cat = {k: [j for j in candidates if cats[j] == k] for k in range(n_cat)}
    k = 0
    while len(true_idx) < n_true:
        pool = [j for j in by_cat[k % n_cat] if j not in true_idx]
        if pool:
            true_idx.append(int(rng.choice(pool)))
        k += 1
    true_idx.sort()
    signs = rng.choice([-1.0, 1.0], size=n_true)
    beta = np.zeros(p)
    beta[true_idx] = effect * signs

    logit = 0.4 + Z @ beta + noise * rng.standard_normal(n)
    rate = expit(logit)

    loc = np.where(rng.random(p) < 0.5, rng.uniform(0.2, 0.8, p), rng.uniform(1e3, 5e4, p))
    scale = np.where(loc < 1.0, rng.uniform(0.05, 0.2, p), rng.uniform(500, 5000, p))
    loc[low_var] = 0.0
    scale[low_var] = rng.uniform(1e-3, 4e-3, len(low_var))
    values = loc + scale * Z

    control_codes = np.digitize(Z[:, 0], [-0.5, 0.7])
    control = [CONTROL_LEVELS[c] for c in control_codes]

    # repayment horizons beyond one year: noisy copies of the target
    extra_rpy = [expit(logit + 0.2 * rng.standard_normal(n) + 0.1 * h) for h in (1, 2, 3)]
    heavy_cols = ["COMP_HEAVY1", "EARN_HEAVY2"]
    heavy_vals = rng.uniform(0, 1, (n, 2))

    heavy_rows = set(rng.choice(n, size=heavy_missing_rows, replace=False).tolist())
    remaining = [i for i in range(n) if i not in heavy_rows]
    target_missing = set(rng.choice(remaining, size=target_missing_rows, replace=False).tolist())

    header = ["UNITID", "INSTNM", "CITY", *names, *heavy_cols, *REPAYMENT_COLUMNS]
    dict_cols = [*names, *heavy_cols, *REPAYMENT_COLUMNS]
    rows_by_year: dict[int, list[list[str]]] = {y: [] for y in years}
    sentinel = ("PrivacySuppressed", "NULL")
    for r in range(n):
        inst, year = divmod(r, len(years))
        year = years[year]
        cells = {}
        for j, name in enumerate(names):
            if name == "CONTROL":
                cells[name] = control[r]
            else:
                cells[name] = repr(float(values[r, j]))
        for c, name in enumerate(heavy_cols):
            cells[name] = repr(float(heavy_vals[r, c]))
        cells[TARGET] = repr(float(rate[r]))
        for h, name in enumerate(REPAYMENT_COLUMNS[1:]):
            cells[name] = repr(float(extra_rpy[h][r]))

        if r in heavy_rows:
            blank = rng.choice(dict_cols, size=int(0.95 * len(dict_cols)), replace=False)
            for name in blank:
                cells[name] = ""
        else:
            for j in numeric:
                if j not in low_var and rng.random() < sprinkle:
                    cells[names[j]] = sentinel[int(rng.integers(2))]
        if r in target_missing:
            cells[TARGET] = "PrivacySuppressed"
        for name in heavy_cols:
            if rng.random() < 0.8:
                cells[name] = "NULL"
        row = [str(100000 + inst), f"Institution {inst}", "Springfield"]
        row += [cells[c] for c in dict_cols]
        rows_by_year[year].append(row)

    # 80% blank in expectation; force the realized fraction above 0.7
    for name in heavy_cols:
        pos = header.index(name)
        filled = [(y, i) for y in years for i, row in enumerate(rows_by_year[y]) if row[pos] != "NULL"]
        limit = int(0.25 * n)
        for y, i in filled[limit:]:
            rows_by_year[y][i][pos] = "NULL"

    dictionary = [("UNITID", "School", "numeric"), ("INSTNM", "School", "numeric")]
    for j, name in enumerate(names):
        dtype = "categorical" if name == "CONTROL" else "numeric"
        dictionary.append((name, PREDICTOR_CATEGORIES[cats[j]].value, dtype))
    dictionary += [("COMP_HEAVY1", "Completion", "numeric"), ("EARN_HEAVY2", "Earnings", "numeric")]
    dictionary += [(c, "Repayment", "numeric") for c in REPAYMENT_COLUMNS]

    n_ingested = p + len(heavy_cols) + len(REPAYMENT_COLUMNS)
    rows_after_filter = n - heavy_missing_rows
    rows_after_target = rows_after_filter - target_missing_rows
    dropped_by_variance = int(np.floor(0.10 * p + 1e-9))
    truth = {
        "seed": seed,
        "rows_generated": n,
        "features_ingested": n_ingested,
        "rows_after_missing_filter": rows_after_filter,
        "features_after_missing_filter": n_ingested - len(heavy_cols),
        "rows_after_target": rows_after_target,
        "predictors": p,
        "features_after_variance_screen": p - dropped_by_variance,
        "true_features": [names[j] for j in true_idx],
        "true_coefficients": {names[j]: float(beta[j]) for j in true_idx},
        "low_variance_features": [names[j] for j in low_var],
        "heavy_missing_features": heavy_cols,
        "categories": {names[j]: PREDICTOR_CATEGORIES[cats[j]].value for j in range(p)},
    }
    return SyntheticPanel(header, rows_by_year, dictionary, truth)


def main(argv=None):
    ap = argparse.ArgumentParser(description="write a synthetic scorecard-like panel")
    ap.add_argument("--out", required=True)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--institutions", type=int, default=250)
    args = ap.parse_args(argv)
    paths = generate(args.seed, args.institutions).write(args.out)
    print(json.dumps(paths, indent=2))


if __name__ == "__main__":
    main()
