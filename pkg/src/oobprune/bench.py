"""Compression-vs-accuracy experiments over datasets, flavors and seeds.

For every (dataset, flavor, seed) the dataset is split with a stratified
hold-out, an ensemble is fitted on the training side and each requested
pruning method is applied to that same ensemble.  ``emit_report`` writes:

``report.csv``
    one row per (dataset, flavor, method, seed) with columns
    ``REPORT_COLUMNS``;
``summary.csv``
    per (dataset, flavor, method) means and sample standard deviations over
    seeds, columns ``SUMMARY_COLUMNS``;
``timings.csv``
    wall-clock seconds per report row.  Kept out of ``report.csv`` so that
    the report is byte-identical across reruns of the same configuration.
"""

from __future__ import annotations

import csv
import math
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .cart import FLAVORS, GrowthParams
from .dataset import Dataset, load_csv, stratified_split
from .ensemble import (
    Ensemble,
    ThresholdCurve,
    fit,
    oob_error,
    predict,
    prune_global_threshold,
    prune_independent,
    size_ratio,
)

__all__ = [
    "METHODS",
    "REPORT_COLUMNS",
    "SUMMARY_COLUMNS",
    "BenchError",
    "ExperimentConfig",
    "ExperimentReport",
    "ReportRow",
    "emit_alpha_distribution",
    "emit_report",
    "emit_threshold_curve",
    "run",
]

METHODS = ("none", "independent", "global")
REPORT_COLUMNS = (
    "dataset", "flavor", "method", "seed", "M", "nodes_before", "nodes_after",
    "size_ratio", "train_acc", "test_acc", "oob_error",
)
SUMMARY_METRICS = ("nodes_before", "nodes_after", "size_ratio", "train_acc", "test_acc", "oob_error")
SUMMARY_COLUMNS = ("dataset", "flavor", "method", "M", "n_seeds") + tuple(
    f"{m}_{stat}" for m in SUMMARY_METRICS for stat in ("mean", "std")
)


class BenchError(RuntimeError):
    """A single experiment run failed; the message names the run."""


@dataclass
class ExperimentConfig:
    datasets: Sequence[str | Path]
    flavors: Sequence[str] = ("RF", "ET", "BT")
    methods: Sequence[str] = METHODS
    M: int = 100
    test_fraction: float = 0.2
    n_seeds: int = 10
    seed: int = 0
    validation_scope: str = "oob"
    out_dir: str | Path | None = None
    label_column: str | int = -1
    has_header: bool = True
    delimiter: str = ","
    emit_alphas: bool = False
    emit_curve: bool = False
    n_jobs: int = 1
    params: GrowthParams = field(default_factory=GrowthParams)

    def __post_init__(self) -> None:
        self.flavors = tuple(f.upper() for f in self.flavors)
        self.methods = tuple(m.lower() for m in self.methods)
        if not self.datasets or not self.flavors or not self.methods:
            raise ValueError("datasets, flavors and methods must be non-empty")
        if bad := [f for f in self.flavors if f not in FLAVORS]:
            raise ValueError(f"unknown flavor(s) {bad}")
        if bad := [m for m in self.methods if m not in METHODS]:
            raise ValueError(f"unknown method(s) {bad}")
        if self.n_seeds < 1 or self.M < 1:
            raise ValueError("n_seeds and M must be >= 1")

    @property
    def seeds(self) -> range:
        return range(self.seed, self.seed + self.n_seeds)


@dataclass(frozen=True)
class ReportRow:
    dataset: str
    flavor: str
    method: str
    seed: int
    M: int
    nodes_before: int
    nodes_after: int
    size_ratio: float
    train_acc: float
    test_acc: float
    oob_error: float
    wall_time: float = 0.0

    def sort_key(self) -> tuple:
        return (self.dataset, FLAVORS.index(self.flavor), METHODS.index(self.method), self.seed)


@dataclass
class ExperimentReport:
    rows: list[ReportRow] = field(default_factory=list)
    # keyed by (dataset, flavor, seed)
    alphas: dict[tuple[str, str, int], tuple[tuple[float, ...], ...]] = field(default_factory=dict)
    curves: dict[tuple[str, str, int], ThresholdCurve] = field(default_factory=dict)


def _accuracy(ens: Ensemble, ds: Dataset) -> float:
    return float(np.mean(predict(ens, ds.features)[0] == ds.labels))


def _apply(method: str, ens: Ensemble, train: Dataset, cfg: ExperimentConfig) -> Ensemble:
    if method == "none":
        return ens
    if method == "independent":
        return prune_independent(ens, train, cfg.validation_scope, n_jobs=cfg.n_jobs)
    return prune_global_threshold(ens, train, n_jobs=cfg.n_jobs)


def run(config: ExperimentConfig) -> ExperimentReport:
    report = ExperimentReport()
    for path in config.datasets:
        name = Path(path).stem
        ds = load_csv(path, config.label_column, config.has_header, config.delimiter)
        for flavor in config.flavors:
            for seed in config.seeds:
                try:
                    _run_one(report, config, name, ds, flavor, seed)
                except Exception as exc:
                    raise BenchError(f"run dataset={name} flavor={flavor} seed={seed} failed: {exc}") from exc
    report.rows.sort(key=ReportRow.sort_key)
    if config.out_dir is not None:
        emit_report(report, config.out_dir)
    return report


def _run_one(report: ExperimentReport, cfg: ExperimentConfig, name: str, ds: Dataset, flavor: str, seed: int) -> None:
    train, test = stratified_split(ds, cfg.test_fraction, seed)
    t0 = time.perf_counter()
    ens = fit(train, flavor, cfg.M, cfg.params, seed=seed, n_jobs=cfg.n_jobs)
    fit_time = time.perf_counter() - t0
    before = ens.total_nodes()
    key = (name, flavor, seed)
    for method in cfg.methods:
        t1 = time.perf_counter()
        pruned = _apply(method, ens, train, cfg)
        elapsed = fit_time + time.perf_counter() - t1
        report.rows.append(ReportRow(
            dataset=name,
            flavor=flavor,
            method=method,
            seed=seed,
            M=cfg.M,
            nodes_before=before,
            nodes_after=pruned.total_nodes(),
            size_ratio=size_ratio(ens, pruned),
            train_acc=_accuracy(pruned, train),
            test_acc=_accuracy(pruned, test),
            oob_error=oob_error(pruned, train).error,
            wall_time=elapsed,
        ))
        if method == "global":
            report.curves[key] = pruned.curve
    if cfg.emit_alphas:
        report.alphas[key] = tuple(tuple(s.alphas.tolist()) for s in ens.sequences(cfg.n_jobs))
    if cfg.out_dir is not None:
        out = Path(cfg.out_dir)
        if cfg.emit_alphas:
            emit_alpha_distribution(ens, out, f"alphas_{name}_{flavor}_seed{seed}.csv")
        if cfg.emit_curve and key in report.curves:
            emit_threshold_curve(report.curves[key], out, f"curve_{name}_{flavor}_seed{seed}.csv")


def _fmt(value) -> str:
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _write_csv(path: Path, header: Sequence[str], rows) -> None:
    with path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([_fmt(v) for v in row])


def _summarize(rows: list[ReportRow]) -> list[tuple]:
    groups: dict[tuple, list[ReportRow]] = {}
    for r in sorted(rows, key=ReportRow.sort_key):
        groups.setdefault((r.dataset, r.flavor, r.method, r.M), []).append(r)
    out = []
    for (dataset, flavor, method, M), members in groups.items():
        line = [dataset, flavor, method, M, len(members)]
        for metric in SUMMARY_METRICS:
            values = [float(getattr(r, metric)) for r in members]
            mean = math.fsum(values) / len(values)
            std = math.sqrt(math.fsum((v - mean) ** 2 for v in values) / (len(values) - 1)) if len(values) > 1 else math.nan
            line += [mean, std]
        out.append(tuple(line))
    return out


def emit_report(report: ExperimentReport, out_dir: str | Path) -> list[Path]:
    """Write ``report.csv``, ``summary.csv`` and ``timings.csv``."""
    if not report.rows:
        raise ValueError("report has no rows")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    rows = sorted(report.rows, key=ReportRow.sort_key)
    paths = [out / "report.csv", out / "summary.csv", out / "timings.csv"]
    _write_csv(paths[0], REPORT_COLUMNS, ([getattr(r, c) for c in REPORT_COLUMNS] for r in rows))
    _write_csv(paths[1], SUMMARY_COLUMNS, _summarize(rows))
    _write_csv(paths[2], ("dataset", "flavor", "method", "seed", "wall_time"),
               ((r.dataset, r.flavor, r.method, r.seed, r.wall_time) for r in rows))
    return paths


def emit_alpha_distribution(ens: Ensemble, out_dir: str | Path, filename: str = "alphas.csv") -> Path:
    """Long-format ``tree_id, step_index, alpha`` for every tree's sequence."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    path = out / filename
    rows = ((j, i, step.alpha) for j, seq in enumerate(ens.sequences()) for i, step in enumerate(seq.steps))
    _write_csv(path, ("tree_id", "step_index", "alpha"), rows)
    return path


def emit_threshold_curve(curve: ThresholdCurve, out_dir: str | Path, filename: str = "curve.csv") -> Path:
    """``threshold_alpha, train_error, oob_error, total_nodes`` ascending in threshold."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    path = out / filename
    rows = zip(
        (float(a) for a in curve.thresholds),
        curve.train_error.tolist(),
        curve.oob_error.tolist(),
        curve.total_nodes.tolist(),
    )
    _write_csv(path, ("threshold_alpha", "train_error", "oob_error", "total_nodes"), rows)
    return path
