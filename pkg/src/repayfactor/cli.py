"""Command-line interface: ``repayfactor <subcommand> [options]``."""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from ._io import write_csv, write_json
from .elastic_net import tune
from .errors import ConfigError, RepayFactorError
from .evaluate import EnetRecipe, ForestRecipe, PcaOlsRecipe, compare_models, cross_validate, validation_curve
from .grouped_pca import fit_grouped_pca, scree_export, transform
from .ingest import filter_missing, load_csv, load_dictionary, merge_years, read_feature_table
from .logit_linreg import fit_ols, logit_transform
from .pipeline import (
    RunConfig,
    _attach_target,
    config_from_mapping,
    parse_input,
    run_pipeline,
    validate_config,
    write_table,
)
from .random_forest import fit_forest, importance
from .screening import ScreeningConfig, correlation_heatmap, screen, select_target, summarize_rates

log = logging.getLogger("repayfactor")

# flag dest -> RunConfig key
_OVERRIDES = {
    "out": "out",
    "seed": "seed",
    "threads": "threads",
    "dictionary": "dictionary",
    "id_column": "id_column",
    "missing_threshold": "missing_threshold",
    "target": "target_name",
    "var_drop": "variance_drop",
    "top": "top_count",
    "summaries": "summary_vars",
    "heatmap_k": "heatmap_k",
    "cutoff": "pca_cutoff",
    "alpha_grid": "alpha_grid",
    "gamma": "gamma",
    "path_length": "path_length",
    "folds": "folds",
    "trees": "n_trees",
    "mtry": "mtry",
    "min_leaf": "min_leaf",
    "max_depth": "max_depth",
    "inputs": "inputs",
    "no_evaluate": None,
}


def _floats(text: str) -> tuple[float, ...]:
    return tuple(float(v) for v in text.replace("[", "").replace("]", "").split(",") if v.strip())


def _names(text: str) -> tuple[str, ...]:
    return tuple(v.strip() for v in text.split(",") if v.strip())


def resolve_config(args) -> RunConfig:
    """Defaults, then the config file, then flags (flags win)."""
    cfg = validate_config(args.config) if args.config else RunConfig()
    updates = {}
    for dest, key in _OVERRIDES.items():
        value = getattr(args, dest, None)
        if key is None or value is None or value == []:
            continue
        updates[key] = tuple(value) if isinstance(value, list) else value
    if getattr(args, "no_evaluate", False):
        updates["evaluate"] = False
    if args.threads is None and os.environ.get("REPAYFACTOR_THREADS"):
        updates["threads"] = os.environ["REPAYFACTOR_THREADS"]
    return config_from_mapping(updates, cfg)


def _table_path(args, cfg: RunConfig, default: str) -> Path:
    return Path(args.table) if getattr(args, "table", None) else Path(cfg.out) / default


def _load_screened(args, cfg):
    table = read_feature_table(_table_path(args, cfg, "screened.csv"))
    rates, predictors = select_target(table, cfg.target_name)
    return predictors, logit_transform(rates, cfg.epsilon)


def cmd_ingest(args, cfg: RunConfig) -> int:
    if not cfg.inputs or not cfg.dictionary:
        raise ConfigError(["ingest needs input CSVs and --dictionary"])
    metas = load_dictionary(cfg.dictionary)
    tables = [load_csv(path, year) for year, path in map(parse_input, cfg.inputs)]
    merged = merge_years(tables, metas, cfg.id_column)
    table = filter_missing(merged, cfg.missing_threshold)
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    paths = write_table(table, out / "features.csv", cfg.id_column)
    print(f"merged {merged.shape[0]} x {merged.shape[1]}, kept {table.shape[0]} x {table.shape[1]} -> {paths[0]}")
    return 0


def cmd_screen(args, cfg: RunConfig) -> int:
    table = read_feature_table(_table_path(args, cfg, "features.csv"))
    out = Path(cfg.out)
    names = [v for v in cfg.summary_vars if v in table.names]
    summaries = summarize_rates(table, names)
    write_csv(out / "summaries.csv", ["name", "count", "min", "q1", "median", "q3", "max"],
              [(q.name, q.count, q.min, q.q1, q.median, q.q3, q.max) for q in summaries])
    rates, predictors = select_target(table, cfg.target_name)
    screened, report = screen(predictors, rates, ScreeningConfig(cfg.variance_drop, cfg.top_count, cfg.target_name))
    write_json(out / "screen_report.json", report.to_dict())
    cats = {m.name: m.category.value for m in screened.metas}
    write_csv(out / "screen_selected.csv", ["rank", "name", "category", "abs_correlation"],
              [(i + 1, n, cats[n], c) for i, (n, c) in enumerate(report.selected)])
    write_csv(out / "screen_dropped.csv", ["name", "variance"], report.dropped_by_variance)
    k = min(cfg.heatmap_k, screened.shape[1])
    M, hm = correlation_heatmap(screened, rates, k)
    write_csv(out / "heatmap.csv", ["name", *hm], [(hm[i], *M[i]) for i in range(k)])
    write_table(_attach_target(screened, rates, table.meta(cfg.target_name)), out / "screened.csv", cfg.id_column)
    print(f"{predictors.shape[1]} predictors -> {screened.shape[1]} after screening ({screened.shape[0]} rows)")
    return 0


def cmd_pca(args, cfg: RunConfig) -> int:
    predictors, _ = _load_screened(args, cfg)
    model, scree = fit_grouped_pca(predictors, cfg.pca_cutoff)
    Z = transform(model, predictors)
    out = Path(cfg.out)
    write_csv(out / "scree.csv", ["category", "index", "ratio", "cumulative", "retained"], scree_export(scree))
    write_csv(out / "components.csv", [cfg.id_column, "YEAR", *model.component_names],
              [(k[0], k[1], *Z[i]) for i, k in enumerate(predictors.row_keys)])
    print(f"{predictors.shape[1]} features -> {model.n_components} components {model.counts()}")
    return 0


def cmd_fit_ols(args, cfg: RunConfig) -> int:
    predictors, target = _load_screened(args, cfg)
    model, _ = fit_grouped_pca(predictors, cfg.pca_cutoff)
    ols = fit_ols(transform(model, predictors), target.y, model.component_names)
    report = cross_validate(PcaOlsRecipe(cfg.pca_cutoff), predictors, target, cfg.folds, cfg.fold_seed())
    out = Path(cfg.out)
    write_csv(out / "ols_coefficients.csv", ["name", "estimate", "std_error", "t", "p"], ols.coefficient_table())
    write_json(out / "ols_metrics.json", {
        "r_squared": ols.r_squared, "residual_variance": ols.residual_variance,
        "rmse_cv": report.mean_rmse, "n_components": ols.n_features,
        "components_by_category": model.counts(),
    })
    print(f"R^2 = {ols.r_squared:.4f}, {cfg.folds}-fold RMSE = {report.mean_rmse:.5f}")
    return 0


def cmd_fit_enet(args, cfg: RunConfig) -> int:
    predictors, target = _load_screened(args, cfg)
    model = tune(predictors.values, target, cfg.enet_config(), cfg.folds, cfg.fold_seed(), predictors.names)
    out = Path(cfg.out)
    path, names = model.path, predictors.names
    write_csv(out / "enet_path.csv", ["alpha", "lambda_index", "lambda", "feature", "coefficient"],
              ((path.alpha, li, lam, names[j], path.coefficients[j, li])
               for li, lam in enumerate(path.lambdas) for j in range(len(names))))
    cats = {m.name: m.category.value for m in predictors.metas}
    idx = {n: j for j, n in enumerate(names)}
    write_csv(out / "enet_active.csv", ["feature", "category", "coefficient"],
              [(n, cats[n], model.coefficients[idx[n]]) for n in model.active_set])
    write_json(out / "enet_model.json", {
        "alpha": model.alpha, "lambda": model.lambda_, "gamma": cfg.gamma,
        "intercept": model.intercept, "cv_rmse": model.cv_rmse,
        "n_active": len(model.active_set), "active_set": model.active_set,
    })
    print(f"alpha={model.alpha} lambda={model.lambda_:.6g} active={len(model.active_set)} cv_rmse={model.cv_rmse:.5f}")
    return 0


def cmd_fit_rf(args, cfg: RunConfig) -> int:
    predictors, target = _load_screened(args, cfg)
    forest = fit_forest(predictors.values, target.y, cfg.forest_config(), cfg.threads, predictors.names)
    imp = importance(forest)
    cats = {m.name: m.category.value for m in predictors.metas}
    order = np.argsort(imp.rank, kind="stable")
    out = Path(cfg.out)
    write_csv(out / "rf_importance.csv", ["feature", "category", "mean", "std", "rank"],
              [(imp.names[j], cats[imp.names[j]], imp.mean_importance[j], imp.std_importance[j], imp.rank[j])
               for j in order])
    metrics = {"n_trees": len(forest.trees), "degenerate_importance": imp.degenerate}
    if args.folds is not None:
        report = cross_validate(ForestRecipe(cfg.forest_config(), cfg.threads), predictors, target,
                                cfg.folds, cfg.fold_seed())
        metrics["rmse_cv"] = report.mean_rmse
    write_json(out / "rf_metrics.json", metrics)
    print("top features: " + ", ".join(imp.top(10)))
    return 0


def cmd_evaluate(args, cfg: RunConfig) -> int:
    predictors, target = _load_screened(args, cfg)
    seed = cfg.fold_seed()
    recipes = []
    if args.recipe in ("pca-ols", "all"):
        recipes.append(PcaOlsRecipe(cfg.pca_cutoff))
    if args.recipe in ("enet", "all"):
        model = tune(predictors.values, target, cfg.enet_config(), cfg.folds, seed, predictors.names)
        recipes.append(EnetRecipe(model.alpha, model.lambda_, cfg.enet_config()))
    if args.recipe in ("rf", "all"):
        recipes.append(ForestRecipe(cfg.forest_config(), cfg.threads))
    reports = [cross_validate(r, predictors, target, cfg.folds, seed) for r in recipes]
    out = Path(cfg.out)
    write_json(out / "cv_reports.json", [r.to_dict() for r in reports])
    table = compare_models(reports)
    write_csv(out / "comparison.csv", ["model_tag", "mean_rmse", "std_rmse"], table)
    if args.curve is not None:
        curve = validation_curve(predictors, target, args.curve or cfg.curve_cutoffs, cfg.folds, seed)
        write_csv(out / "validation_curve.csv", ["cutoff", "components", "train_rmse", "val_rmse"], curve.rows())
    for tag, mean, std in table:
        print(f"{tag:8s} {mean:.5f} +/- {std:.5f}")
    return 0


def cmd_run(args, cfg: RunConfig) -> int:
    manifest = run_pipeline(cfg)
    print(f"run {manifest.status}: {len(manifest.artifacts)} artifacts in {cfg.out}")
    return 0 if manifest.status == "complete" else 1


def cmd_validate_config(args, cfg: RunConfig) -> int:
    print(json.dumps(cfg.snapshot(), indent=2, sort_keys=True))
    return 0


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="flat key = value run configuration")
    common.add_argument("--out", help="output directory")
    common.add_argument("--seed", type=int)
    common.add_argument("--threads", type=int, help="worker threads (env REPAYFACTOR_THREADS)")
    common.add_argument("-v", "--verbose", action="store_true")

    table = argparse.ArgumentParser(add_help=False)
    table.add_argument("--table", help="feature table CSV (sidecar *_meta.csv next to it)")
    table.add_argument("--target", help="target variable (default RPY_1YR_RT)")

    parser = argparse.ArgumentParser(prog="repayfactor", description=__doc__)
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", parents=[common], help="merge yearly CSVs into a feature table")
    p.add_argument("inputs", nargs="*", help="yearly CSVs as YYYY:path or paths containing the year")
    p.add_argument("--dictionary")
    p.add_argument("--id-column")
    p.add_argument("--missing-threshold", type=float)
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("screen", parents=[common, table], help="variance and correlation screens")
    p.add_argument("--var-drop", type=float)
    p.add_argument("--top", type=int)
    p.add_argument("--summaries", type=_names, help="comma-separated rate variables to summarize")
    p.add_argument("--heatmap-k", type=int)
    p.set_defaults(func=cmd_screen)

    p = sub.add_parser("pca", parents=[common, table], help="per-category PCA")
    p.add_argument("--cutoff", type=float)
    p.set_defaults(func=cmd_pca)

    p = sub.add_parser("fit-ols", parents=[common, table], help="PCA components + logit OLS")
    p.add_argument("--cutoff", type=float)
    p.add_argument("--folds", type=int)
    p.set_defaults(func=cmd_fit_ols)

    p = sub.add_parser("fit-enet", parents=[common, table], help="elastic-net path and CV tuning")
    p.add_argument("--alpha-grid", type=_floats)
    p.add_argument("--gamma", type=float)
    p.add_argument("--path-length", type=int)
    p.add_argument("--folds", type=int)
    p.set_defaults(func=cmd_fit_enet)

    p = sub.add_parser("fit-rf", parents=[common, table], help="random forest and importances")
    p.add_argument("--trees", type=int)
    p.add_argument("--mtry", type=int)
    p.add_argument("--min-leaf", type=int)
    p.add_argument("--max-depth", type=int)
    p.add_argument("--folds", type=int, help="also report k-fold RMSE")
    p.set_defaults(func=cmd_fit_rf)

    p = sub.add_parser("evaluate", parents=[common, table], help="cross-validated model comparison")
    p.add_argument("--recipe", choices=["pca-ols", "enet", "rf", "all"], default="all")
    p.add_argument("--folds", type=int)
    p.add_argument("--cutoff", type=float)
    p.add_argument("--curve", nargs="?", const=(), type=_floats,
                   help="validation curve; optional comma-separated cutoffs")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("run", parents=[common], help="whole pipeline from a run configuration")
    p.add_argument("inputs", nargs="*")
    p.add_argument("--dictionary")
    p.add_argument("--folds", type=int)
    p.add_argument("--no-evaluate", action="store_true", help="skip the cross-validation stage")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("validate-config", parents=[common], help="check a configuration file")
    p.add_argument("path", nargs="?")
    p.set_defaults(func=cmd_validate_config)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    if args.command == "validate-config" and args.path:
        args.config = args.path
    try:
        cfg = resolve_config(args)
        return args.func(args, cfg)
    except ConfigError as exc:
        for v in exc.violations:
            print(f"config error: {v}", file=sys.stderr)
        return 1
    except (RepayFactorError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
