"""Command-line entry point: ``oobprune fit | prune | eval | bench``.

Exit codes: 0 success, 2 usage error, 3 bad input data, 4 bad or
mismatched model file, 5 I/O failure, 6 experiment run failure.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .bench import METHODS, BenchError, ExperimentConfig, emit_alpha_distribution, emit_threshold_curve, run
from .cart import FLAVORS, GrowthParams
from .dataset import DataError, Dataset, load_csv
from .ensemble import (
    Ensemble,
    NoOOBCoverageError,
    dataset_digest,
    fit,
    load_ensemble,
    oob_error,
    predict,
    prune_global_threshold,
    prune_independent,
    save_ensemble,
)

EXIT_USAGE = 2
EXIT_DATA = 3
EXIT_MODEL = 4
EXIT_IO = 5
EXIT_RUN = 6


class CLIError(Exception):
    def __init__(self, category: str, code: int, message: str):
        super().__init__(message)
        self.category = category
        self.code = code


def _split_list(values: list[str] | None, default: tuple[str, ...]) -> list[str]:
    if not values:
        return list(default)
    return [v.strip() for item in values for v in item.split(",") if v.strip()]


def _add_data_args(p: argparse.ArgumentParser, required: bool = True) -> None:
    p.add_argument("--dataset", required=required, action="append" if p.prog.endswith("bench") else "store",
                   help="CSV file (repeatable for bench)")
    p.add_argument("--label-col", default="-1", help="label column name or index (default: last column)")
    p.add_argument("--no-header", action="store_true", help="CSV has no header row")
    p.add_argument("--delimiter", default=",", help="field delimiter (default ',')")


def _load(args) -> Dataset:
    try:
        return load_csv(args.dataset, args.label_col, not args.no_header, args.delimiter)
    except DataError as exc:
        raise CLIError("data", EXIT_DATA, str(exc)) from exc


def _load_model(path: str) -> Ensemble:
    try:
        return load_ensemble(path)
    except OSError as exc:
        raise CLIError("io", EXIT_IO, f"cannot read model {path}: {exc}") from exc
    except (ValueError, KeyError, TypeError) as exc:
        raise CLIError("model", EXIT_MODEL, f"invalid model file {path}: {exc}") from exc


def _require_training_set(ens: Ensemble, ds: Dataset) -> None:
    if ds.n_samples != ens.n_train or (ens.data_digest and ens.data_digest != dataset_digest(ds)):
        raise CLIError("model", EXIT_MODEL, "dataset is not the one this model was fitted on")


def _save(ens: Ensemble, path: str) -> None:
    try:
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        save_ensemble(ens, path)
    except OSError as exc:
        raise CLIError("io", EXIT_IO, f"cannot write {path}: {exc}") from exc


def cmd_fit(args) -> dict:
    ds = _load(args)
    params = GrowthParams(args.flavor.upper(), args.max_features, args.min_samples_leaf)
    ens = fit(ds, args.flavor, args.trees, params, seed=args.seed, n_jobs=args.jobs)
    _save(ens, args.out)
    return {"model": args.out, "flavor": ens.flavor, "M": ens.M, "total_nodes": ens.total_nodes(),
            "oob_error": _safe_oob(ens, ds)}


def _safe_oob(ens: Ensemble, ds: Dataset) -> float | None:
    try:
        return oob_error(ens, ds).error
    except NoOOBCoverageError:
        return None


def cmd_prune(args) -> dict:
    ens = _load_model(args.model)
    ds = _load(args)
    _require_training_set(ens, ds)
    base = ens.unpruned()
    scope = "full_train" if args.validation_scope == "train" else "oob"
    if args.method == "independent":
        pruned = prune_independent(base, ds, scope, n_jobs=args.jobs)
    elif args.method == "global":
        try:
            pruned = prune_global_threshold(base, ds, oob_voting=not args.all_trees_vote, n_jobs=args.jobs)
        except NoOOBCoverageError as exc:
            raise CLIError("data", EXIT_DATA, str(exc)) from exc
    else:
        pruned = base
    _save(pruned, args.out)
    out_dir = Path(args.out).parent
    stem = Path(args.out).stem
    files = []
    try:
        if args.emit_alphas:
            files.append(str(emit_alpha_distribution(pruned, out_dir, f"{stem}_alphas.csv")))
        if args.emit_curve and pruned.curve is not None:
            files.append(str(emit_threshold_curve(pruned.curve, out_dir, f"{stem}_curve.csv")))
    except OSError as exc:
        raise CLIError("io", EXIT_IO, str(exc)) from exc
    return {"model": args.out, "method": pruned.method, "nodes_before": base.total_nodes(),
            "nodes_after": pruned.total_nodes(), "size_ratio": pruned.total_nodes() / base.total_nodes(),
            "threshold": None if pruned.threshold is None else float(pruned.threshold),
            "oob_error": _safe_oob(pruned, ds), "files": files}


def cmd_eval(args) -> dict:
    ens = _load_model(args.model)
    ds = _load(args)
    if ds.n_features != ens.trees[0].n_features:
        raise CLIError("data", EXIT_DATA, f"model expects {ens.trees[0].n_features} features, dataset has {ds.n_features}")
    # map the dataset's label strings onto the model's class encoding
    lookup = {name: k for k, name in enumerate(ens.class_names)}
    try:
        truth = np.array([lookup[ds.class_names[i]] for i in ds.labels])
    except KeyError as exc:
        raise CLIError("data", EXIT_DATA, f"label {exc.args[0]!r} unknown to the model") from exc
    labels, _ = predict(ens, ds.features)
    result = {"model": args.model, "method": ens.method, "M": ens.M, "rows": ds.n_samples,
              "accuracy": float(np.mean(labels == truth)), "total_nodes": ens.total_nodes()}
    if ds.n_samples == ens.n_train and ens.data_digest == dataset_digest(ds):
        result["oob_error"] = _safe_oob(ens, ds)
    return result


def cmd_bench(args) -> dict:
    cfg = ExperimentConfig(
        datasets=args.dataset,
        flavors=_split_list(args.flavor, FLAVORS),
        methods=_split_list(args.method, METHODS),
        M=args.trees,
        test_fraction=args.test_fraction,
        n_seeds=args.seeds,
        seed=args.seed,
        validation_scope="full_train" if args.validation_scope == "train" else "oob",
        out_dir=args.out,
        label_column=args.label_col,
        has_header=not args.no_header,
        delimiter=args.delimiter,
        emit_alphas=args.emit_alphas,
        emit_curve=args.emit_curve,
        n_jobs=args.jobs,
    )
    try:
        report = run(cfg)
    except DataError as exc:
        raise CLIError("data", EXIT_DATA, str(exc)) from exc
    except BenchError as exc:
        if isinstance(exc.__cause__, OSError):
            raise CLIError("io", EXIT_IO, str(exc)) from exc
        raise CLIError("run", EXIT_RUN, str(exc)) from exc
    except OSError as exc:
        raise CLIError("io", EXIT_IO, str(exc)) from exc
    return {"out": args.out, "rows": len(report.rows)}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="oobprune", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("fit", help="fit an ensemble and save it as JSON")
    _add_data_args(p)
    p.add_argument("--flavor", type=str.lower, choices=["rf", "et", "bt"], default="rf")
    p.add_argument("--trees", type=int, default=100, metavar="M")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--max-features", type=int, default=None)
    p.add_argument("--min-samples-leaf", type=int, default=1)
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--out", required=True, help="model JSON path")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("prune", help="prune a fitted ensemble with OOB subtree selection")
    p.add_argument("--model", required=True)
    _add_data_args(p)
    p.add_argument("--method", choices=list(METHODS), default="global")
    p.add_argument("--validation-scope", choices=["oob", "train"], default="oob")
    p.add_argument("--all-trees-vote", action="store_true",
                   help="global method: score thresholds with all trees voting on every training row")
    p.add_argument("--emit-alphas", action="store_true")
    p.add_argument("--emit-curve", action="store_true")
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--out", required=True, help="pruned model JSON path")
    p.set_defaults(func=cmd_prune)

    p = sub.add_parser("eval", help="score a model on a labelled CSV")
    p.add_argument("--model", required=True)
    _add_data_args(p)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("bench", help="run the compression-vs-accuracy experiment grid")
    _add_data_args(p)
    p.add_argument("--flavor", action="append", type=str.upper, help="RF, ET, BT (repeatable or comma-separated)")
    p.add_argument("--method", action="append", type=str.lower, help="none, independent, global")
    p.add_argument("--trees", type=int, default=100, metavar="M")
    p.add_argument("--seeds", type=int, default=10, metavar="N")
    p.add_argument("--seed", type=int, default=0, help="first seed")
    p.add_argument("--test-fraction", type=float, default=0.2)
    p.add_argument("--validation-scope", choices=["oob", "train"], default="oob")
    p.add_argument("--emit-alphas", action="store_true")
    p.add_argument("--emit-curve", action="store_true")
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_bench)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        result = args.func(args)
    except CLIError as exc:
        print(f"oobprune: error [{exc.category}]: {exc}", file=sys.stderr)
        return exc.code
    except ValueError as exc:
        print(f"oobprune: error [usage]: {exc}", file=sys.stderr)
        return EXIT_USAGE
    print(json.dumps(result, indent=2))
    return 0


if __name__ == "__main__":
    sys.exit(main())
