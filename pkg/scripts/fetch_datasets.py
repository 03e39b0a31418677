"""Write iris, digits and (optionally) wine-quality CSVs for the benchmark.

iris and digits come from the copies bundled with scikit-learn, so no network
is needed. Wine quality is downloaded from the UCI archive when ``--wine`` is
passed. Every file has a header row with the label in the last column.

    python scripts/fetch_datasets.py data/ [--wine]
"""

import argparse
import csv
import io
import urllib.request
from pathlib import Path

WINE_URL = "https://archive.ics.uci.edu/ml/machine-learning-databases/wine-quality/winequality-red.csv"


def write_csv(path: Path, X, y, feature_names) -> None:
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(list(feature_names) + ["label"])
        for row, label in zip(X.tolist(), y.tolist()):
            w.writerow([repr(float(v)) for v in row] + [label])


def sklearn_datasets(out: Path) -> list[Path]:
    from sklearn.datasets import load_digits, load_iris

    iris = load_iris()
    digits = load_digits()
    paths = [out / "iris.csv", out / "digits.csv"]
    write_csv(paths[0], iris.data, iris.target_names[iris.target], iris.feature_names)
    write_csv(paths[1], digits.data, digits.target, [f"px{i}" for i in range(digits.data.shape[1])])
    return paths


def wine(out: Path) -> Path:
    raw = urllib.request.urlopen(WINE_URL, timeout=60).read().decode()
    rows = list(csv.reader(io.StringIO(raw), delimiter=";"))
    path = out / "winequality-red.csv"
    with path.open("w", newline="") as fh:
        csv.writer(fh).writerows(rows)
    return path


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("out_dir")
    ap.add_argument("--wine", action="store_true", help="also download red wine quality")
    args = ap.parse_args()
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = sklearn_datasets(out)
    if args.wine:
        paths.append(wine(out))
    for p in paths:
        print(p)


if __name__ == "__main__":
    main()
