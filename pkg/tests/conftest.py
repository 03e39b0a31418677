import csv
from pathlib import Path

import numpy as np
import pytest

from oobprune import fit, load_csv, stratified_split


def _write(path: Path, X, labels, names) -> Path:
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(list(names) + ["label"])
        for row, lab in zip(X.tolist(), labels):
            w.writerow([repr(float(v)) for v in row] + [lab])
    return path


@pytest.fixture(scope="session")
def data_dir(tmp_path_factory) -> Path:
    sk = pytest.importorskip("sklearn.datasets")
    out = tmp_path_factory.mktemp("data")
    iris = sk.load_iris()
    digits = sk.load_digits()
    _write(out / "iris.csv", iris.data, iris.target_names[iris.target].tolist(), iris.feature_names)
    _write(out / "digits.csv", digits.data, digits.target.tolist(), [f"px{i}" for i in range(64)])
    return out


@pytest.fixture(scope="session")
def iris_path(data_dir) -> Path:
    return data_dir / "iris.csv"


@pytest.fixture(scope="session")
def digits_path(data_dir) -> Path:
    return data_dir / "digits.csv"


@pytest.fixture(scope="session")
def iris(iris_path):
    return load_csv(iris_path)


@pytest.fixture(scope="session")
def digits(digits_path):
    return load_csv(digits_path)


class FitCache:
    """Ensembles fitted on the 80/20 training side, shared across test modules."""

    def __init__(self, datasets):
        self.datasets = datasets
        self._splits = {}
        self._fits = {}

    def split(self, name: str, seed: int):
        key = (name, seed)
        if key not in self._splits:
            self._splits[key] = stratified_split(self.datasets[name], 0.2, seed)
        return self._splits[key]

    def get(self, name: str, flavor: str, seed: int, M: int = 100):
        key = (name, flavor, seed, M)
        if key not in self._fits:
            train, _ = self.split(name, seed)
            self._fits[key] = fit(train, flavor, M, seed=seed)
        return self._fits[key]


@pytest.fixture(scope="session")
def fits(iris_path, digits_path) -> FitCache:
    return FitCache({"iris": load_csv(iris_path), "digits": load_csv(digits_path)})


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
