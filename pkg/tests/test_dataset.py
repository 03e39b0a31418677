import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from oobprune.dataset import (
    DataError,
    IndexSample,
    bootstrap,
    derive_seed,
    from_arrays,
    load_csv,
    make_rng,
    stratified_split,
)


def write(tmp_path, text, name="d.csv"):
    p = tmp_path / name
    p.write_text(text)
    return p


def test_iris_shape(iris):
    assert (iris.n_samples, iris.n_features, iris.n_classes) == (150, 4, 3)
    assert iris.class_counts().tolist() == [50, 50, 50]
    assert iris.class_names == ("setosa", "versicolor", "virginica")


def test_digits_shape(digits):
    assert (digits.n_samples, digits.n_features, digits.n_classes) == (1797, 64, 10)


def test_first_appearance_encoding(tmp_path):
    ds = load_csv(write(tmp_path, "f,label\n1,a\n2,b\n3,a\n"))
    assert ds.labels.tolist() == [0, 1, 0]
    assert ds.n_classes == 2
    assert ds.class_names == ("a", "b")


def test_label_column_by_name_and_index(tmp_path):
    p = write(tmp_path, "cls,x,y\nu,1,2\nv,3,4\n")
    by_name = load_csv(p, "cls")
    by_index = load_csv(p, 0)
    assert by_name.feature_names == ("x", "y")
    np.testing.assert_array_equal(by_name.features, by_index.features)
    assert load_csv(p, "0").class_names == ("u", "v")


def test_no_header_and_delimiter(tmp_path):
    ds = load_csv(write(tmp_path, "1;2;p\n3;4;q\n"), has_header=False, delimiter=";")
    assert ds.features.tolist() == [[1.0, 2.0], [3.0, 4.0]]
    assert ds.feature_names == ("x0", "x1")


@pytest.mark.parametrize(
    "text, fragment",
    [
        ("a,label\n1,x\nfoo,y\n", "line 3, column 1"),
        ("a,label\n1,x\nnan,y\n", "non-finite"),
        ("a,label\n1,x\n2\n", "expected 2 fields"),
        ("a,label\n1,x\n2,x\n", "single class"),
        ("a,label\n", "no data rows"),
        ("", "empty file"),
    ],
)
def test_malformed_csv(tmp_path, text, fragment):
    with pytest.raises(DataError, match=fragment):
        load_csv(write(tmp_path, text))


def test_missing_label_column(tmp_path):
    p = write(tmp_path, "a,b\n1,2\n3,4\n")
    with pytest.raises(DataError, match="not found"):
        load_csv(p, "label")
    with pytest.raises(DataError, match="out of range"):
        load_csv(p, 5)


def test_missing_file(tmp_path):
    with pytest.raises(DataError, match="cannot read"):
        load_csv(tmp_path / "nope.csv")


def test_dataset_validation():
    with pytest.raises(DataError):
        from_arrays([[1.0], [2.0]], [0, 0])
    with pytest.raises(DataError):
        from_arrays([[1.0], [np.inf]], [0, 1])
    with pytest.raises(DataError, match="every class"):
        from_arrays([[1.0], [2.0]], [0, 0], class_names=["a", "b"])
    ds = from_arrays([[1.0], [2.0]], ["p", "q"])
    with pytest.raises(ValueError):
        ds.features[0, 0] = 5.0


def test_iris_split(iris):
    train, test = stratified_split(iris, 0.2, 7)
    assert (train.n_samples, test.n_samples) == (120, 30)
    assert test.class_counts().tolist() == [10, 10, 10]
    again_train, again_test = stratified_split(iris, 0.2, 7)
    np.testing.assert_array_equal(train.features, again_train.features)
    np.testing.assert_array_equal(test.labels, again_test.labels)


def test_split_tiny():
    ds = from_arrays([[0.0], [1.0], [2.0], [3.0]], ["a", "a", "b", "b"])
    train, test = stratified_split(ds, 0.5, 0)
    assert train.class_counts().tolist() == [1, 1]
    assert test.class_counts().tolist() == [1, 1]


def test_split_errors():
    ds = from_arrays([[0.0], [1.0], [2.0]], ["a", "a", "b"])
    with pytest.raises(DataError, match="at least 2"):
        stratified_split(ds, 0.3, 0)
    ds = from_arrays([[0.0], [1.0], [2.0], [3.0]], ["a", "a", "b", "b"])
    with pytest.raises(DataError, match="without training rows"):
        stratified_split(ds, 0.9, 0)
    with pytest.raises(DataError):
        stratified_split(ds, 1.0, 0)


@settings(max_examples=40, deadline=None)
@given(st.lists(st.integers(2, 30), min_size=2, max_size=5), st.floats(0.05, 0.45), st.integers(0, 2**32))
def test_split_partitions_rows(class_sizes, fraction, seed):
    labels = np.repeat(np.arange(len(class_sizes)), class_sizes)
    X = np.arange(labels.size, dtype=float)[:, None]
    ds = from_arrays(X, labels, class_names=[str(k) for k in range(len(class_sizes))])
    train, test = stratified_split(ds, fraction, seed)
    rows = np.concatenate([train.features[:, 0], test.features[:, 0]])
    assert sorted(rows.tolist()) == X[:, 0].tolist()
    # original order preserved on each side
    assert np.all(np.diff(train.features[:, 0]) > 0) and np.all(np.diff(test.features[:, 0]) > 0)
    for k, size in enumerate(class_sizes):
        expected = max(1, int(np.floor(size * fraction + 0.5)))
        assert test.class_counts()[k] == expected


def test_oob_complement():
    s = IndexSample(np.array([0, 0, 2, 4, 4]))
    assert s.oob.tolist() == [1, 3]
    assert s.oob_mask().tolist() == [False, True, False, True, False]


def test_bootstrap_single():
    s = bootstrap(1, 3)
    assert s.in_bag.tolist() == [0]
    assert s.oob.size == 0


def test_bootstrap_rejects_empty():
    with pytest.raises(DataError):
        bootstrap(0, 0)


@settings(max_examples=50, deadline=None)
@given(st.integers(1, 300), st.integers(0, 2**63 - 1))
def test_bootstrap_invariants(n, seed):
    s = bootstrap(n, seed)
    assert s.in_bag.size == n
    assert s.in_bag.min() >= 0 and s.in_bag.max() < n
    assert np.intersect1d(s.oob, s.in_bag).size == 0
    assert np.union1d(s.oob, s.in_bag).tolist() == list(range(n))
    np.testing.assert_array_equal(s.in_bag, bootstrap(n, seed).in_bag)


def test_seed_helpers_are_stable():
    assert make_rng(5).integers(0, 10**9) == make_rng(5).integers(0, 10**9)
    assert derive_seed(1, 2) == derive_seed(1, 2)
    assert derive_seed(1, 2) != derive_seed(2, 1)
    assert 0 <= derive_seed(9, 9) < 2**63
