"""Dataset loading, stratified splitting and bootstrap sampling.

All randomness goes through ``numpy.random.Generator`` backed by PCG64 and
seeded through ``numpy.random.SeedSequence``.  Given the same integer seed the
draws are identical on every platform numpy supports, which is what every
determinism guarantee in this package relies on.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

__all__ = [
    "DataError",
    "Dataset",
    "IndexSample",
    "bootstrap",
    "derive_seed",
    "from_arrays",
    "load_csv",
    "make_rng",
    "stratified_split",
]


class DataError(ValueError):
    """Raised for malformed or unusable input data."""


def make_rng(*seed: int) -> np.random.Generator:
    """PCG64 generator seeded from one or more non-negative integers."""
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(list(seed))))


def derive_seed(*seed: int) -> int:
    """Collapse an integer tuple into a single 63-bit child seed."""
    state = np.random.SeedSequence(list(seed)).generate_state(2, dtype=np.uint32)
    return (int(state[0]) << 31) ^ int(state[1])


@dataclass(frozen=True, eq=False)
class Dataset:
    features: np.ndarray
    labels: np.ndarray
    class_names: tuple[str, ...]
    feature_names: tuple[str, ...]

    def __post_init__(self) -> None:
        X = np.ascontiguousarray(self.features, dtype=np.float64)
        y = np.ascontiguousarray(self.labels, dtype=np.int64)
        if X.ndim != 2 or X.shape[0] < 1 or X.shape[1] < 1:
            raise DataError(f"features must be a non-empty 2-D matrix, got shape {X.shape}")
        if y.shape != (X.shape[0],):
            raise DataError(f"labels must have length {X.shape[0]}, got shape {y.shape}")
        if not np.all(np.isfinite(X)):
            raise DataError("features contain NaN or infinite values")
        K = len(self.class_names)
        if K < 2:
            raise DataError(f"need at least 2 classes, got {K}")
        if y.min() < 0 or y.max() >= K:
            raise DataError("label index out of range")
        if np.unique(y).size != K:
            raise DataError("every class must occur at least once")
        if len(self.feature_names) != X.shape[1]:
            raise DataError("feature_names length does not match feature count")
        X.setflags(write=False)
        y.setflags(write=False)
        object.__setattr__(self, "features", X)
        object.__setattr__(self, "labels", y)
        object.__setattr__(self, "class_names", tuple(self.class_names))
        object.__setattr__(self, "feature_names", tuple(self.feature_names))

    @property
    def n_samples(self) -> int:
        return self.features.shape[0]

    @property
    def n_features(self) -> int:
        return self.features.shape[1]

    @property
    def n_classes(self) -> int:
        return len(self.class_names)

    def class_counts(self) -> np.ndarray:
        return np.bincount(self.labels, minlength=self.n_classes)

    def subset(self, rows: Sequence[int] | np.ndarray) -> "Dataset":
        """Rows ``rows`` as a new dataset sharing this one's class encoding.

        The subset must still contain every class.
        """
        rows = np.asarray(rows, dtype=np.int64)
        return Dataset(self.features[rows], self.labels[rows], self.class_names, self.feature_names)


def from_arrays(
    X,
    y,
    class_names: Sequence[str] | None = None,
    feature_names: Sequence[str] | None = None,
) -> Dataset:
    """Build a dataset from a feature matrix and raw labels.

    Raw labels are encoded by order of first appearance unless ``class_names``
    is given, in which case ``y`` must already hold indices into it.
    """
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2:
        raise DataError(f"features must be 2-D, got shape {X.shape}")
    if class_names is None:
        codes: dict = {}
        encoded = [codes.setdefault(v, len(codes)) for v in np.asarray(y).tolist()]
        y = np.asarray(encoded, dtype=np.int64)
        class_names = [str(v) for v in codes]
    if feature_names is None:
        feature_names = [f"x{j}" for j in range(X.shape[1])]
    return Dataset(X, np.asarray(y, dtype=np.int64), tuple(class_names), tuple(feature_names))


def load_csv(
    path: str | Path,
    label_column: str | int = -1,
    has_header: bool = True,
    delimiter: str = ",",
) -> Dataset:
    """Read a numeric CSV file with one label column.

    ``label_column`` is a header name, or a (possibly negative) column index.
    Labels are encoded to dense indices in order of first appearance; all
    other cells must parse as finite decimal numbers.
    """
    path = Path(path)
    try:
        with path.open(newline="", encoding="utf-8") as fh:
            records = [r for r in csv.reader(fh, delimiter=delimiter) if r and any(c.strip() for c in r)]
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc}") from exc
    except (UnicodeDecodeError, csv.Error) as exc:
        raise DataError(f"{path}: {exc}") from exc

    if has_header:
        if not records:
            raise DataError(f"{path}: empty file")
        header = [c.strip() for c in records[0]]
        records = records[1:]
        first_line = 2
    else:
        header = None
        first_line = 1
    if not records:
        raise DataError(f"{path}: no data rows")

    width = len(header) if header is not None else len(records[0])
    if isinstance(label_column, str) and not _is_int(label_column):
        if header is None or label_column not in header:
            raise DataError(f"{path}: label column {label_column!r} not found")
        label_idx = header.index(label_column)
    else:
        label_idx = int(label_column)
        if not -width <= label_idx < width:
            raise DataError(f"{path}: label column index {label_idx} out of range for {width} columns")
        label_idx %= width

    feat_cols = [c for c in range(width) if c != label_idx]
    if not feat_cols:
        raise DataError(f"{path}: no feature columns")
    X = np.empty((len(records), len(feat_cols)), dtype=np.float64)
    raw_labels = []
    for i, rec in enumerate(records):
        line = first_line + i
        if len(rec) != width:
            raise DataError(f"{path}: line {line}: expected {width} fields, got {len(rec)}")
        for out_j, col in enumerate(feat_cols):
            cell = rec[col].strip()
            try:
                value = float(cell)
            except ValueError:
                raise DataError(f"{path}: line {line}, column {col + 1}: cannot parse {cell!r} as a number") from None
            if not math.isfinite(value):
                raise DataError(f"{path}: line {line}, column {col + 1}: non-finite value {cell!r}")
            X[i, out_j] = value
        raw_labels.append(rec[label_idx].strip())

    if len(set(raw_labels)) < 2:
        raise DataError(f"{path}: label column holds a single class")
    if header is not None:
        feature_names = [header[c] for c in feat_cols]
    else:
        feature_names = [f"x{c}" for c in feat_cols]
    return from_arrays(X, raw_labels, feature_names=feature_names)


def _is_int(text: str) -> bool:
    try:
        int(text)
    except ValueError:
        return False
    return True


def stratified_split(ds: Dataset, test_fraction: float, seed: int) -> tuple[Dataset, Dataset]:
    """Per-class random split; each class sends round(count * fraction) rows to test.

    Both sides keep the original row order.
    """
    if not 0.0 < test_fraction < 1.0:
        raise DataError(f"test_fraction must lie in (0, 1), got {test_fraction}")
    rng = make_rng(seed)
    test_rows = []
    for k, count in enumerate(ds.class_counts()):
        if count < 2:
            raise DataError(f"class {ds.class_names[k]!r} has {count} sample(s); need at least 2 to split")
        n_test = max(1, math.floor(count * test_fraction + 0.5))
        if n_test >= count:
            raise DataError(f"test_fraction {test_fraction} leaves class {ds.class_names[k]!r} without training rows")
        members = np.flatnonzero(ds.labels == k)
        test_rows.append(rng.permutation(members)[:n_test])
    is_test = np.zeros(ds.n_samples, dtype=bool)
    is_test[np.concatenate(test_rows)] = True
    return ds.subset(np.flatnonzero(~is_test)), ds.subset(np.flatnonzero(is_test))


@dataclass(frozen=True, eq=False)
class IndexSample:
    """Bootstrap draw (with multiplicity) and its out-of-bag complement."""

    in_bag: np.ndarray
    n: int = -1
    oob: np.ndarray = field(init=False)

    def __post_init__(self) -> None:
        in_bag = np.asarray(self.in_bag, dtype=np.int64)
        n = self.n if self.n >= 0 else in_bag.size
        if in_bag.size and (in_bag.min() < 0 or in_bag.max() >= n):
            raise DataError("in_bag index out of range")
        seen = np.zeros(n, dtype=bool)
        seen[in_bag] = True
        in_bag.setflags(write=False)
        oob = np.flatnonzero(~seen)
        oob.setflags(write=False)
        object.__setattr__(self, "in_bag", in_bag)
        object.__setattr__(self, "oob", oob)
        object.__setattr__(self, "n", n)

    def oob_mask(self) -> np.ndarray:
        mask = np.zeros(self.n, dtype=bool)
        mask[self.oob] = True
        return mask


def bootstrap(n: int, seed: int) -> IndexSample:
    """Draw ``n`` row indices uniformly with replacement from ``range(n)``."""
    if n < 1:
        raise DataError(f"bootstrap needs n >= 1, got {n}")
    draw = make_rng(seed).integers(0, n, size=n, dtype=np.int64)
    return IndexSample(draw, n=n)
