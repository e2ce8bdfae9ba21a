"""End-to-end run: ingest, screen, PCA + OLS, elastic net, forest, evaluation."""

from __future__ import annotations

import configparser
import dataclasses
import hashlib
import re
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from ._io import sha256_file, write_csv, write_json
from .elastic_net import EnetConfig, tune
from .errors import ConfigError
from .evaluate import (
    EnetRecipe,
    ForestRecipe,
    PcaOlsRecipe,
    compare_models,
    cross_validate,
    validation_curve,
)
from .grouped_pca import fit_grouped_pca, scree_export, transform
from .ingest import (
    DEFAULT_ID_COLUMN,
    FeatureTable,
    filter_missing,
    load_csv,
    load_dictionary,
    merge_years,
    write_feature_table,
)
from .logit_linreg import fit_ols, logit_transform
from .random_forest import ForestConfig, fit_forest, importance
from .screening import ScreeningConfig, correlation_heatmap, screen, select_target, summarize_rates

DEFAULT_CURVE_CUTOFFS = (0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 0.95, 0.99, 1.0)
RATE_SUMMARY_VARS = ("RPY_1YR_RT", "RPY_3YR_RT", "RPY_5YR_RT", "RPY_7YR_RT")


@dataclass(frozen=True)
class RunConfig:
    inputs: tuple[str, ...] = ()
    dictionary: str = ""
    out: str = "repayfactor-out"
    id_column: str = DEFAULT_ID_COLUMN
    target_name: str = "RPY_1YR_RT"
    missing_threshold: float = 0.70
    variance_drop: float = 0.10
    top_count: int = 500
    pca_cutoff: float = 0.80
    alpha_grid: tuple[float, ...] = (0.1, 0.3, 0.5, 0.7, 0.9)
    gamma: float = 5e-3
    path_length: int = 100
    enet_tolerance: float = 1e-7
    max_iters: int = 10_000
    n_trees: int = 20
    mtry: int | None = None
    min_leaf: int = 5
    max_depth: int | None = None
    folds: int = 10
    seed: int = 42
    threads: int = 1
    epsilon: float = 1e-6
    heatmap_k: int = 20
    curve_cutoffs: tuple[float, ...] = DEFAULT_CURVE_CUTOFFS
    summary_vars: tuple[str, ...] = RATE_SUMMARY_VARS
    evaluate: bool = True

    def enet_config(self) -> EnetConfig:
        return EnetConfig(self.alpha_grid, self.gamma, self.path_length, self.enet_tolerance, self.max_iters)

    def forest_config(self) -> ForestConfig:
        return ForestConfig(self.n_trees, self.mtry, self.min_leaf, self.max_depth, True,
                            derive_seed(self.seed, "forest"))

    def fold_seed(self) -> int:
        return derive_seed(self.seed, "folds")

    def snapshot(self) -> dict:
        return dataclasses.asdict(self)


def derive_seed(seed: int, stage: str) -> int:
    """Stage-specific seed derived from the single run seed."""
    digest = hashlib.sha256(f"{seed}/{stage}".encode()).digest()
    return int.from_bytes(digest[:8], "little") & 0x7FFFFFFFFFFFFFFF


_FIELDS = {f.name: f for f in dataclasses.fields(RunConfig)}


def _convert(name: str, raw: str):
    ftype = str(_FIELDS[name].type)
    raw = raw.strip()
    if ftype.startswith("tuple[float"):
        return tuple(float(v) for v in re.split(r"[,\s]+", raw.strip("[]()")) if v)
    if ftype.startswith("tuple[str"):
        return tuple(v.strip() for v in raw.split(",") if v.strip())
    if ftype.startswith("int | None"):
        return None if raw.lower() in ("", "none") else int(raw)
    if ftype == "int":
        return int(raw)
    if ftype == "float":
        return float(raw)
    if ftype == "bool":
        if raw.lower() in ("1", "true", "yes", "on"):
            return True
        if raw.lower() in ("0", "false", "no", "off"):
            return False
        raise ValueError(f"not a boolean: {raw!r}")
    return raw


def _violations(cfg: RunConfig) -> list[str]:
    v = []

    def check(ok, key, msg):
        if not ok:
            v.append(f"{key}: {msg} (got {getattr(cfg, key)!r})")

    check(0.0 <= cfg.missing_threshold <= 1.0, "missing_threshold", "must lie in [0, 1]")
    check(0.0 <= cfg.variance_drop < 1.0, "variance_drop", "must lie in [0, 1)")
    check(cfg.top_count >= 1, "top_count", "must be >= 1")
    check(0.0 < cfg.pca_cutoff <= 1.0, "pca_cutoff", "must lie in (0, 1]")
    check(bool(cfg.alpha_grid) and all(0.0 < a <= 1.0 for a in cfg.alpha_grid), "alpha_grid", "entries must lie in (0, 1]")
    check(0.0 < cfg.gamma < 1.0, "gamma", "must lie in (0, 1)")
    check(cfg.path_length >= 1, "path_length", "must be >= 1")
    check(cfg.enet_tolerance > 0.0, "enet_tolerance", "must be positive")
    check(cfg.max_iters >= 1, "max_iters", "must be >= 1")
    check(cfg.n_trees >= 1, "n_trees", "must be >= 1")
    check(cfg.mtry is None or cfg.mtry >= 1, "mtry", "must be >= 1")
    check(cfg.min_leaf >= 1, "min_leaf", "must be >= 1")
    check(cfg.max_depth is None or cfg.max_depth >= 0, "max_depth", "must be >= 0")
    check(cfg.folds >= 2, "folds", "must be >= 2")
    check(cfg.threads >= 1, "threads", "must be >= 1")
    check(0.0 < cfg.epsilon < 0.5, "epsilon", "must lie in (0, 0.5)")
    check(cfg.heatmap_k >= 1, "heatmap_k", "must be >= 1")
    check(bool(cfg.curve_cutoffs) and all(0.0 < c <= 1.0 for c in cfg.curve_cutoffs), "curve_cutoffs", "entries must lie in (0, 1]")
    return v


def config_from_mapping(values: dict, base: RunConfig | None = None) -> RunConfig:
    """Build a validated config; raw string values are converted by field type."""
    base = base or RunConfig()
    errors, updates = [], {}
    for key, raw in values.items():
        key = key.strip().lower().replace("-", "_")
        if key not in _FIELDS:
            errors.append(f"{key}: unknown key")
            continue
        try:
            updates[key] = _convert(key, raw) if isinstance(raw, str) else raw
        except ValueError as exc:
            errors.append(f"{key}: cannot parse {raw!r} ({exc})")
    if errors:
        raise ConfigError(errors)
    for key in ("alpha_grid", "curve_cutoffs", "inputs", "summary_vars"):
        if key in updates:
            updates[key] = tuple(updates[key])
    cfg = dataclasses.replace(base, **updates)
    errors = _violations(cfg)
    if errors:
        raise ConfigError(errors)
    return cfg


def validate_config(path) -> RunConfig:
    """Parse a flat ``key = value`` file; absent keys keep their defaults.

    Raises ConfigError listing every violation at once.
    """
    text = Path(path).read_text(encoding="utf-8")
    parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    parser.optionxform = str
    try:
        parser.read_string("[run]\n" + text)
    except configparser.Error as exc:
        raise ConfigError([f"parse error: {exc}"]) from exc
    if len(parser.sections()) > 1:
        raise ConfigError([f"parse error: sections are not supported ({parser.sections()[1]!r})"])
    return config_from_mapping(dict(parser["run"]))


def parse_input(entry: str) -> tuple[int, str]:
    """``YYYY:path`` or a path whose file name contains the year."""
    m = re.match(r"^(\d{4}):(.+)$", entry)
    if m:
        return int(m.group(1)), m.group(2)
    m = re.search(r"(19|20)\d{2}", Path(entry).name)
    if not m:
        raise ConfigError([f"inputs: cannot infer a year from {entry!r}; use YYYY:path"])
    return int(m.group(0)), entry


@dataclass
class RunManifest:
    config: dict
    version: str = __version__
    status: str = "running"
    failed_stage: str | None = None
    error: str | None = None
    inputs: dict = field(default_factory=dict)
    stages: list = field(default_factory=list)
    artifacts: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


class _Run:
    def __init__(self, cfg: RunConfig):
        self.cfg = cfg
        self.out = Path(cfg.out)
        self.manifest = RunManifest(cfg.snapshot())

    def artifact(self, name: str) -> Path:
        return self.out / name

    def record(self, path: Path):
        self.manifest.artifacts[path.name] = sha256_file(path)

    def stage(self, name, fn):
        t0 = time.perf_counter()
        try:
            counts = fn() or {}
        except Exception as exc:
            self.manifest.status = "failed"
            self.manifest.failed_stage = name
            self.manifest.error = f"{type(exc).__name__}: {exc}"
            raise
        self.manifest.stages.append({"name": name, **counts, "seconds": time.perf_counter() - t0})


def write_table(table: FeatureTable, path: Path, id_column: str) -> list[Path]:
    meta = path.with_name(path.stem + "_meta.csv")
    write_feature_table(table, path, meta, id_column)
    return [path, meta]


def run_pipeline(cfg: RunConfig) -> RunManifest:
    """Execute every stage, write artifacts under ``cfg.out``, then the manifest."""
    run = _Run(cfg)
    run.out.mkdir(parents=True, exist_ok=True)
    state: dict = {}
    try:
        _run_stages(run, state)
        run.manifest.status = "complete"
    finally:
        write_json(run.out / "manifest.json", run.manifest.to_dict())
    return run.manifest


def _run_stages(run: _Run, s: dict):
    cfg = run.cfg
    rec = run.record

    def ingest_stage():
        if not cfg.inputs or not cfg.dictionary:
            raise ConfigError(["inputs and dictionary are required for a run"])
        metas = load_dictionary(cfg.dictionary)
        run.manifest.inputs[cfg.dictionary] = sha256_file(cfg.dictionary)
        tables = []
        for entry in cfg.inputs:
            year, path = parse_input(entry)
            run.manifest.inputs[path] = sha256_file(path)
            tables.append(load_csv(path, year))
        merged = merge_years(tables, metas, cfg.id_column)
        s["merged_shape"] = merged.shape
        s["table"] = filter_missing(merged, cfg.missing_threshold)
        for p in write_table(s["table"], run.artifact("features.csv"), cfg.id_column):
            rec(p)
        return {"rows_merged": merged.shape[0], "cols_merged": merged.shape[1],
                "rows": s["table"].shape[0], "cols": s["table"].shape[1]}

    def screen_stage():
        table = s["table"]
        names = [v for v in cfg.summary_vars if v in table.names]
        summaries = summarize_rates(table, names)
        rec(write_csv(run.artifact("summaries.csv"), ["name", "count", "min", "q1", "median", "q3", "max"],
                      [(q.name, q.count, q.min, q.q1, q.median, q.q3, q.max) for q in summaries]))
        rates, predictors = select_target(table, cfg.target_name)
        scfg = ScreeningConfig(cfg.variance_drop, cfg.top_count, cfg.target_name)
        screened, report = screen(predictors, rates, scfg)
        s.update(rates=rates, predictors=predictors, screened=screened, report=report)
        rec(write_json(run.artifact("screen_report.json"), report.to_dict()))
        cats = {m.name: m.category.value for m in screened.metas}
        rec(write_csv(run.artifact("screen_selected.csv"), ["rank", "name", "category", "abs_correlation"],
                      [(i + 1, n, cats[n], c) for i, (n, c) in enumerate(report.selected)]))
        rec(write_csv(run.artifact("screen_dropped.csv"), ["name", "variance"], report.dropped_by_variance))
        k = min(cfg.heatmap_k, screened.shape[1])
        M, hm_names = correlation_heatmap(screened, rates, k)
        rec(write_csv(run.artifact("heatmap.csv"), ["name", *hm_names],
                      [(hm_names[i], *M[i]) for i in range(k)]))
        with_target = _attach_target(screened, rates, table.meta(cfg.target_name))
        for p in write_table(with_target, run.artifact("screened.csv"), cfg.id_column):
            rec(p)
        return {"rows": screened.shape[0], "cols_predictors": predictors.shape[1],
                "cols_after_variance": predictors.shape[1] - len(report.dropped_by_variance),
                "cols": screened.shape[1]}

    def pca_ols_stage():
        screened = s["screened"]
        target = logit_transform(s["rates"], cfg.epsilon)
        s["target"] = target
        pca, scree = fit_grouped_pca(screened, cfg.pca_cutoff)
        Z = transform(pca, screened)
        rec(write_csv(run.artifact("scree.csv"), ["category", "index", "ratio", "cumulative", "retained"],
                      scree_export(scree)))
        rec(write_csv(run.artifact("components.csv"), [cfg.id_column, "YEAR", *pca.component_names],
                      [(k[0], k[1], *Z[i]) for i, k in enumerate(screened.row_keys)]))
        ols = fit_ols(Z, target.y, pca.component_names)
        s["ols"] = ols
        s["pca_counts"] = pca.counts()
        rec(write_csv(run.artifact("ols_coefficients.csv"), ["name", "estimate", "std_error", "t", "p"],
                      ols.coefficient_table()))
        return {"rows": Z.shape[0], "cols": Z.shape[1], "components_by_category": pca.counts()}

    def enet_stage():
        screened, target = s["screened"], s["target"]
        model = tune(screened.values, target, cfg.enet_config(), cfg.folds, cfg.fold_seed(), screened.names)
        s["enet"] = model
        path = model.path
        names = screened.names
        rec(write_csv(run.artifact("enet_path.csv"), ["alpha", "lambda_index", "lambda", "feature", "coefficient"],
                      ((path.alpha, li, lam, names[j], path.coefficients[j, li])
                       for li, lam in enumerate(path.lambdas) for j in range(len(names)))))
        rec(write_csv(run.artifact("enet_cv.csv"), ["alpha", "lambda_index", "lambda", "mean_rmse"],
                      ((a, li, model.cv_lambdas[a][li], m[li])
                       for a, m in model.cv_mean.items() for li in range(m.size))))
        cats = {m.name: m.category.value for m in screened.metas}
        idx = {n: j for j, n in enumerate(names)}
        rec(write_csv(run.artifact("enet_active.csv"), ["feature", "category", "coefficient"],
                      [(n, cats[n], model.coefficients[idx[n]]) for n in model.active_set]))
        rec(write_json(run.artifact("enet_model.json"), {
            "alpha": model.alpha, "lambda": model.lambda_, "gamma": cfg.gamma,
            "intercept": model.intercept, "cv_rmse": model.cv_rmse,
            "n_active": len(model.active_set), "active_set": model.active_set,
        }))
        return {"rows": screened.shape[0], "cols": len(model.active_set)}

    def forest_stage():
        screened, target = s["screened"], s["target"]
        forest = fit_forest(screened.values, target.y, cfg.forest_config(), cfg.threads, screened.names)
        imp = importance(forest)
        cats = {m.name: m.category.value for m in screened.metas}
        order = np.argsort(imp.rank, kind="stable")
        rec(write_csv(run.artifact("rf_importance.csv"), ["feature", "category", "mean", "std", "rank"],
                      [(imp.names[j], cats[imp.names[j]], imp.mean_importance[j], imp.std_importance[j],
                        imp.rank[j]) for j in order]))
        s["forest_digest"] = forest.digest()
        return {"rows": screened.shape[0], "cols": screened.shape[1], "trees": len(forest.trees),
                "degenerate_importance": imp.degenerate}

    def evaluate_stage():
        screened, target, enet = s["screened"], s["target"], s["enet"]
        seed = cfg.fold_seed()
        recipes = [
            PcaOlsRecipe(cfg.pca_cutoff),
            EnetRecipe(enet.alpha, enet.lambda_, cfg.enet_config()),
            ForestRecipe(cfg.forest_config(), cfg.threads),
        ]
        reports = [cross_validate(r, screened, target, cfg.folds, seed) for r in recipes]
        rec(write_json(run.artifact("cv_reports.json"), [r.to_dict() for r in reports]))
        rec(write_csv(run.artifact("comparison.csv"), ["model_tag", "mean_rmse", "std_rmse"],
                      compare_models(reports)))
        curve = validation_curve(screened, target, cfg.curve_cutoffs, cfg.folds, seed)
        rec(write_csv(run.artifact("validation_curve.csv"), ["cutoff", "components", "train_rmse", "val_rmse"],
                      curve.rows()))
        ols = s["ols"]
        rec(write_json(run.artifact("ols_metrics.json"), {
            "r_squared": ols.r_squared, "residual_variance": ols.residual_variance,
            "rmse_cv": reports[0].mean_rmse, "n_components": ols.n_features,
            "components_by_category": s["pca_counts"],
        }))
        return {"rows": screened.shape[0], "folds": cfg.folds,
                "mean_rmse": {r.model_tag: r.mean_rmse for r in reports}}

    run.stage("ingest", ingest_stage)
    run.stage("screen", screen_stage)
    run.stage("pca_ols", pca_ols_stage)
    run.stage("enet", enet_stage)
    run.stage("forest", forest_stage)
    if cfg.evaluate:
        run.stage("evaluate", evaluate_stage)
    else:
        ols = s["ols"]
        rec(write_json(run.artifact("ols_metrics.json"), {
            "r_squared": ols.r_squared, "residual_variance": ols.residual_variance,
            "rmse_cv": None, "n_components": ols.n_features,
            "components_by_category": s["pca_counts"],
        }))


def _attach_target(predictors: FeatureTable, rates: np.ndarray, meta) -> FeatureTable:
    values = np.column_stack([predictors.values, rates])
    missing = np.column_stack([predictors.missing, np.zeros(rates.shape[0], dtype=bool)])
    return FeatureTable(values, missing, predictors.metas + (meta,), predictors.row_keys)
