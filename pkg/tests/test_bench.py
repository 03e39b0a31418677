import csv

import numpy as np
import pytest

from oobprune.bench import (
    METHODS,
    REPORT_COLUMNS,
    SUMMARY_COLUMNS,
    BenchError,
    ExperimentConfig,
    ExperimentReport,
    ReportRow,
    emit_alpha_distribution,
    emit_report,
    emit_threshold_curve,
    run,
)
from oobprune.cart import FLAVORS, GrowthParams
from oobprune.dataset import IndexSample
from oobprune.ensemble import Ensemble, oob_error, prune_global_threshold

from _trees import depth_two_tree, eight_sample_tree


def read(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


@pytest.fixture(scope="module")
def small_run(iris_path, tmp_path_factory):
    out = tmp_path_factory.mktemp("bench")
    cfg = ExperimentConfig([iris_path], M=15, n_seeds=3, out_dir=out, emit_alphas=True, emit_curve=True)
    return cfg, run(cfg), out


def test_report_layout(small_run):
    cfg, report, out = small_run
    rows = read(out / "report.csv")
    assert tuple(rows[0]) == REPORT_COLUMNS
    assert len(rows) == 1 + 3 * 3 * 3
    assert tuple(read(out / "summary.csv")[0]) == SUMMARY_COLUMNS
    assert len(read(out / "summary.csv")) == 1 + 9
    assert read(out / "timings.csv")[0] == ["dataset", "flavor", "method", "seed", "wall_time"]
    keys = [(r[1], r[2], int(r[3])) for r in rows[1:]]
    assert keys == sorted(keys, key=lambda k: (FLAVORS.index(k[0]), METHODS.index(k[1]), k[2]))


def test_report_row_invariants(small_run):
    _, report, _ = small_run
    for r in report.rows:
        assert r.nodes_after <= r.nodes_before
        assert r.size_ratio == r.nodes_after / r.nodes_before
        if r.method == "none":
            assert r.nodes_after == r.nodes_before and r.size_ratio == 1.0


def test_summary_means(small_run):
    _, report, out = small_run
    summary = {(r[1], r[2]): r for r in read(out / "summary.csv")[1:]}
    col = SUMMARY_COLUMNS.index("size_ratio_mean")
    std_col = SUMMARY_COLUMNS.index("test_acc_std")
    for flavor in ("RF", "ET", "BT"):
        for method in ("none", "independent", "global"):
            vals = [r.size_ratio for r in report.rows if r.flavor == flavor and r.method == method]
            assert float(summary[flavor, method][col]) == pytest.approx(np.mean(vals), abs=1e-15)
            accs = [r.test_acc for r in report.rows if r.flavor == flavor and r.method == method]
            assert float(summary[flavor, method][std_col]) == pytest.approx(np.std(accs, ddof=1), abs=1e-12)


def test_report_is_reproducible(small_run, tmp_path):
    cfg, _, out = small_run
    cfg2 = ExperimentConfig(cfg.datasets, M=15, n_seeds=3, out_dir=tmp_path)
    run(cfg2)
    for name in ("report.csv", "summary.csv"):
        assert (tmp_path / name).read_bytes() == (out / name).read_bytes()


def test_method_none_only(iris_path):
    report = run(ExperimentConfig([iris_path], flavors=["ET"], methods=["none"], M=5, n_seeds=2))
    assert {r.size_ratio for r in report.rows} == {1.0}
    assert not report.curves


def test_emitted_side_files(small_run):
    _, report, out = small_run
    for flavor in ("RF", "ET", "BT"):
        rows = read(out / f"alphas_iris_{flavor}_seed0.csv")
        assert rows[0] == ["tree_id", "step_index", "alpha"]
        first = [r for r in rows[1:] if r[1] == "0"]
        assert len(first) == 15 and all(float(r[2]) == 0.0 for r in first)
        curve = read(out / f"curve_iris_{flavor}_seed0.csv")
        assert curve[0] == ["threshold_alpha", "train_error", "oob_error", "total_nodes"]
        thresholds = [float(r[0]) for r in curve[1:]]
        assert thresholds[0] == 0.0 and thresholds == sorted(thresholds)
        assert int(curve[-1][3]) == 15
        none_row = next(r for r in report.rows if (r.flavor, r.method, r.seed) == (flavor, "none", 0))
        assert float(curve[1][2]) == none_row.oob_error


def test_emit_report_single_row(tmp_path):
    row = ReportRow("d", "RF", "none", 0, 1, 3, 3, 1.0, 1.0, 0.5, 0.25, 0.01)
    paths = emit_report(ExperimentReport([row]), tmp_path)
    assert [p.name for p in paths] == ["report.csv", "summary.csv", "timings.csv"]
    assert len(read(paths[0])) == 2
    assert read(paths[0])[1][-1] == "0.25"
    summary = read(paths[1])[1]
    assert summary[SUMMARY_COLUMNS.index("size_ratio_std")] == "nan"
    with pytest.raises(ValueError):
        emit_report(ExperimentReport(), tmp_path)


def test_alpha_rows_count(tmp_path):
    ens = Ensemble("BT", (depth_two_tree(), eight_sample_tree()),
                   (IndexSample(np.arange(8)), IndexSample(np.arange(8))), 0, GrowthParams("BT"), ("a", "b"))
    rows = read(emit_alpha_distribution(ens, tmp_path))
    assert len(rows) - 1 == sum(len(s) for s in ens.sequences()) == 4


def test_curve_train_error_not_required_monotone(fits, tmp_path):
    # the file simply records what happens; check it against the curve object
    ens = fits.get("iris", "RF", 0, M=30)
    train, _ = fits.split("iris", 0)
    curve = prune_global_threshold(ens, train).curve
    rows = read(emit_threshold_curve(curve, tmp_path))[1:]
    assert [float(r[1]) for r in rows] == curve.train_error.tolist()
    assert float(rows[0][2]) == oob_error(ens, train).error


def test_config_validation(iris_path):
    with pytest.raises(ValueError):
        ExperimentConfig([iris_path], flavors=["GBM"])
    with pytest.raises(ValueError):
        ExperimentConfig([iris_path], methods=["magic"])
    with pytest.raises(ValueError):
        ExperimentConfig([], M=3)
    with pytest.raises(ValueError):
        ExperimentConfig([iris_path], n_seeds=0)


def test_run_failure_names_the_run(tmp_path):
    # class 'c' has a single row, so the stratified split fails
    p = tmp_path / "bad.csv"
    p.write_text("x,y\n1,a\n2,a\n3,b\n4,b\n5,c\n")
    with pytest.raises(BenchError, match="dataset=bad flavor=RF seed=0"):
        run(ExperimentConfig([p], flavors=["RF"], M=2, n_seeds=1))
