"""Tree ensembles (RF / ET / BT) and out-of-bag subtree selection.

Two pruning strategies pick one nested subtree per tree:

``prune_independent``
    each tree keeps the subtree of its own pruning sequence with the fewest
    errors on its out-of-bag rows (smallest subtree on ties);

``prune_global_threshold``
    a single alpha threshold is shared by the forest; every tree takes its
    largest sequence alpha not above it, and the threshold minimizing the
    forest's OOB error wins (largest threshold on ties).

Class votes are always accumulated tree by tree in index order, so every
code path that sums the same per-tree probabilities gets bitwise identical
totals.
"""

from __future__ import annotations

import hashlib
from bisect import bisect_right
import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from fractions import Fraction
from pathlib import Path
from typing import Callable, Iterable, NamedTuple, Sequence, TypeVar

import numpy as np

from . import __version__
from .cart import FLAVORS, DecisionTree, GrowthParams, grow
from .ccp import EmptyValidationError, PrunedSequence, routing_intervals, select_best_subtree, weakest_link_sequence
from .dataset import Dataset, IndexSample, bootstrap, derive_seed

__all__ = [
    "AlphaGrid",
    "Ensemble",
    "NoOOBCoverageError",
    "OOBScore",
    "ThresholdCurve",
    "alpha_grid",
    "dataset_digest",
    "fit",
    "load_ensemble",
    "oob_error",
    "predict",
    "prune_global_threshold",
    "prune_independent",
    "save_ensemble",
    "size_ratio",
    "steps_for_threshold",
]

ENSEMBLE_FORMAT = "oobprune.ensemble"
ENSEMBLE_FORMAT_VERSION = 1
VALIDATION_SCOPES = ("oob", "full_train")

T = TypeVar("T")
R = TypeVar("R")


class NoOOBCoverageError(ValueError):
    """No training row is out-of-bag for any tree."""


def _map(fn: Callable[[T], R], items: Iterable[T], n_jobs: int) -> list[R]:
    items = list(items)
    if n_jobs <= 1 or len(items) <= 1:
        return [fn(it) for it in items]
    with ThreadPoolExecutor(max_workers=n_jobs) as pool:
        return list(pool.map(fn, items))


def dataset_digest(ds: Dataset) -> str:
    h = hashlib.sha256()
    h.update(np.asarray(ds.features.shape, dtype=np.int64).tobytes())
    h.update(ds.features.tobytes())
    h.update(ds.labels.tobytes())
    return h.hexdigest()


@dataclass(frozen=True, eq=False)
class ThresholdCurve:
    """Forest errors along the global threshold grid (ascending)."""

    thresholds: tuple[Fraction, ...]
    train_error: np.ndarray
    oob_error: np.ndarray
    total_nodes: np.ndarray
    best_index: int

    @property
    def threshold_values(self) -> np.ndarray:
        return np.array([float(a) for a in self.thresholds])


@dataclass(eq=False)
class Ensemble:
    flavor: str
    trees: tuple[DecisionTree, ...]
    samples: tuple[IndexSample, ...]
    seed: int
    params: GrowthParams
    class_names: tuple[str, ...] = ()
    data_digest: str = ""
    selected_steps: tuple[int, ...] | None = None
    method: str = "none"
    validation_scope: str | None = None
    threshold: Fraction | None = None
    curve: ThresholdCurve | None = field(default=None, repr=False)
    _sequences: list[PrunedSequence] | None = field(default=None, repr=False)

    def __post_init__(self) -> None:
        if len(self.trees) < 1 or len(self.trees) != len(self.samples):
            raise ValueError("an ensemble needs M >= 1 trees, one sample per tree")
        if self.selected_steps is not None and len(self.selected_steps) != len(self.trees):
            raise ValueError("selected_steps must have one entry per tree")

    @property
    def M(self) -> int:
        return len(self.trees)

    @property
    def n_classes(self) -> int:
        return self.trees[0].n_classes

    @property
    def n_train(self) -> int:
        return self.samples[0].n

    @property
    def is_pruned(self) -> bool:
        return self.selected_steps is not None

    def sequences(self, n_jobs: int = 1) -> list[PrunedSequence]:
        """Weakest-link sequence of every tree (computed once, then shared)."""
        if self._sequences is None:
            self._sequences = _map(weakest_link_sequence, self.trees, n_jobs)
        return self._sequences

    def leaf_mask(self, j: int) -> np.ndarray | None:
        if self.selected_steps is None:
            return None
        return self.sequences()[j].leaf_mask(self.selected_steps[j])

    def node_counts(self) -> list[int]:
        if self.selected_steps is None:
            return [t.n_nodes for t in self.trees]
        seqs = self.sequences()
        return [seqs[j].steps[s].node_count for j, s in enumerate(self.selected_steps)]

    def total_nodes(self) -> int:
        return int(sum(self.node_counts()))

    def selected_alphas(self) -> list[float]:
        if self.selected_steps is None:
            return [0.0] * self.M
        seqs = self.sequences()
        return [seqs[j].steps[s].alpha for j, s in enumerate(self.selected_steps)]

    def tree_proba(self, j: int, X) -> np.ndarray:
        return self.trees[j].predict_proba(X, self.leaf_mask(j))

    def unpruned(self) -> "Ensemble":
        return replace(self, selected_steps=None, method="none", validation_scope=None, threshold=None, curve=None)

    def to_dict(self) -> dict:
        pruning = None
        if self.selected_steps is not None:
            pruning = {
                "method": self.method,
                "validation_scope": self.validation_scope,
                "selected_steps": list(self.selected_steps),
                "selected_alphas": self.selected_alphas(),
                "threshold": None if self.threshold is None else float(self.threshold),
                "threshold_num": None if self.threshold is None else self.threshold.numerator,
                "threshold_den": None if self.threshold is None else self.threshold.denominator,
            }
        return {
            "format": ENSEMBLE_FORMAT,
            "version": ENSEMBLE_FORMAT_VERSION,
            "package_version": __version__,
            "flavor": self.flavor,
            "seed": self.seed,
            "params": asdict(self.params),
            "n_train": self.n_train,
            "class_names": list(self.class_names),
            "data_digest": self.data_digest,
            "samples": [s.in_bag.tolist() for s in self.samples],
            "trees": [t.to_dict() for t in self.trees],
            "pruning": pruning,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "Ensemble":
        if data.get("format") != ENSEMBLE_FORMAT or data.get("version") != ENSEMBLE_FORMAT_VERSION:
            raise ValueError("not a version-1 oobprune ensemble document")
        n = int(data["n_train"])
        ens = cls(
            flavor=data["flavor"],
            trees=tuple(DecisionTree.from_dict(t) for t in data["trees"]),
            samples=tuple(IndexSample(np.asarray(s, dtype=np.int64), n=n) for s in data["samples"]),
            seed=int(data["seed"]),
            params=GrowthParams(**data["params"]),
            class_names=tuple(data.get("class_names", ())),
            data_digest=data.get("data_digest", ""),
        )
        pruning = data.get("pruning")
        if pruning:
            steps = tuple(int(s) for s in pruning["selected_steps"])
            seqs = ens.sequences()
            for j, s in enumerate(steps):
                if not 0 <= s < len(seqs[j]):
                    raise ValueError(f"tree {j}: selected step {s} outside its pruning sequence")
            threshold = None
            if pruning.get("threshold_num") is not None:
                threshold = Fraction(pruning["threshold_num"], pruning["threshold_den"])
            ens.selected_steps = steps
            ens.method = pruning["method"]
            ens.validation_scope = pruning.get("validation_scope")
            ens.threshold = threshold
        return ens

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), separators=(",", ":"))


def save_ensemble(ens: Ensemble, path: str | Path) -> None:
    Path(path).write_text(ens.to_json() + "\n", encoding="utf-8")


def load_ensemble(path: str | Path) -> Ensemble:
    return Ensemble.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


def fit(
    ds: Dataset,
    flavor: str = "RF",
    M: int = 100,
    params: GrowthParams | None = None,
    seed: int = 0,
    n_jobs: int = 1,
) -> Ensemble:
    """Bootstrap and grow ``M`` trees.

    Tree ``j`` draws its bootstrap and its node generators from seeds derived
    from ``(seed, j)`` only, so the result does not depend on ``n_jobs``.
    """
    if M < 1:
        raise ValueError(f"M must be >= 1, got {M}")
    flavor = flavor.upper()
    if flavor not in FLAVORS:
        raise ValueError(f"unknown flavor {flavor!r}; expected one of {FLAVORS}")
    template = replace(params or GrowthParams(), flavor=flavor, seed=0)

    def one(j: int) -> tuple[DecisionTree, IndexSample]:
        tree_seed = derive_seed(seed, j)
        sample = bootstrap(ds.n_samples, derive_seed(tree_seed, 0))
        return grow(ds, sample, replace(template, seed=derive_seed(tree_seed, 1))), sample

    fitted = _map(one, range(M), n_jobs)
    return Ensemble(
        flavor=flavor,
        trees=tuple(t for t, _ in fitted),
        samples=tuple(s for _, s in fitted),
        seed=seed,
        params=template,
        class_names=ds.class_names,
        data_digest=dataset_digest(ds),
    )


def _accumulate(parts: Iterable[np.ndarray], out: np.ndarray) -> np.ndarray:
    for p in parts:
        out += p
    return out


def predict(ens: Ensemble, X) -> tuple[np.ndarray, np.ndarray]:
    """Class index and mean class distribution for one row or a matrix."""
    X = np.asarray(X, dtype=np.float64)
    single = X.ndim == 1
    if single:
        X = X[None, :]
    votes = _accumulate((ens.tree_proba(j, X) for j in range(ens.M)), np.zeros((X.shape[0], ens.n_classes)))
    labels = np.argmax(votes, axis=1)
    proba = votes / ens.M
    if single:
        return labels[0], proba[0]
    return labels, proba


class OOBScore(NamedTuple):
    error: float
    n_misclassified: int
    n_covered: int
    n_uncovered: int


def _check_training_set(ens: Ensemble, ds: Dataset) -> None:
    if ds.n_samples != ens.n_train:
        raise ValueError(f"ensemble was fitted on {ens.n_train} rows, dataset has {ds.n_samples}")
    if ens.data_digest and ens.data_digest != dataset_digest(ds):
        raise ValueError("dataset differs from the one the ensemble was fitted on")


def oob_error(ens: Ensemble, ds: Dataset) -> OOBScore:
    """Forest error on training rows, each voted on only by trees it is out-of-bag for.

    Rows out-of-bag for no tree are left out of both counts.
    """
    _check_training_set(ens, ds)
    X, y = ds.features, ds.labels
    votes = np.zeros((ds.n_samples, ens.n_classes))
    covered = np.zeros(ds.n_samples, dtype=bool)
    for j in range(ens.M):
        oob = ens.samples[j].oob
        if oob.size:
            votes[oob] += ens.tree_proba(j, X[oob])
            covered[oob] = True
    n_cov = int(covered.sum())
    if n_cov == 0:
        raise NoOOBCoverageError("no training row is out-of-bag for any tree")
    wrong = int(np.count_nonzero(np.argmax(votes[covered], axis=1) != y[covered]))
    return OOBScore(wrong / n_cov, wrong, n_cov, ds.n_samples - n_cov)


def prune_independent(ens: Ensemble, ds: Dataset, validation_scope: str = "oob", n_jobs: int = 1) -> Ensemble:
    """Per-tree subtree with the fewest errors on that tree's validation rows.

    ``validation_scope="full_train"`` validates every tree on the whole
    training set instead of its OOB rows.  A tree with no OOB rows keeps its
    unpruned form.
    """
    if validation_scope not in VALIDATION_SCOPES:
        raise ValueError(f"validation_scope must be one of {VALIDATION_SCOPES}")
    _check_training_set(ens, ds)
    seqs = ens.sequences(n_jobs)
    X, y = ds.features, ds.labels

    def choose(j: int) -> int:
        rows = ens.samples[j].oob if validation_scope == "oob" else np.arange(ds.n_samples)
        try:
            return select_best_subtree(seqs[j], X[rows], y[rows])[1]
        except EmptyValidationError:
            return 0

    steps = tuple(_map(choose, range(ens.M), n_jobs))
    return replace(ens, selected_steps=steps, method="independent", validation_scope=validation_scope,
                   threshold=None, curve=None, _sequences=seqs)


def prune_global_threshold(ens: Ensemble, ds: Dataset, oob_voting: bool = True, n_jobs: int = 1) -> Ensemble:
    """Choose one alpha threshold for the whole forest by OOB error.

    Thresholds range over the union of all trees' sequence alphas.  With
    ``oob_voting=False`` the objective is the error of all trees voting on
    every training row instead.  The returned ensemble carries the full
    threshold curve.
    """
    _check_training_set(ens, ds)
    seqs = ens.sequences(n_jobs)
    X, y = ds.features, ds.labels
    M, N, K = ens.M, ds.n_samples, ens.n_classes

    oob_weight = np.zeros((M, N))
    for j in range(M):
        oob_weight[j, ens.samples[j].oob] = 1.0
    covered = oob_weight.any(axis=0)
    n_cov = int(covered.sum())
    if oob_voting and n_cov == 0:
        raise NoOOBCoverageError("no training row is out-of-bag for any tree")

    # contrib[j, i]: class distribution of the node row i currently lands in for tree j
    contrib = np.empty((M, N, K))
    changes: dict[Fraction, list[tuple[int, np.ndarray, np.ndarray]]] = {}

    def route(j: int):
        return routing_intervals(seqs[j], X)

    for j, iv in enumerate(_map(route, range(M), n_jobs)):
        proba = seqs[j].base.node_proba
        first = iv.start == 0
        contrib[j, iv.rows[first]] = proba[iv.nodes[first]]
        later = ~first
        rows, start, nodes = iv.rows[later], iv.start[later], iv.nodes[later]
        order = np.argsort(start, kind="stable")
        rows, start, nodes = rows[order], start[order], nodes[order]
        bounds = np.flatnonzero(np.diff(start)) + 1
        for r, s, nd in zip(np.split(rows, bounds), np.split(start, bounds), np.split(nodes, bounds)):
            if r.size:
                alpha = seqs[j].steps[int(s[0])].alpha_exact
                changes.setdefault(alpha, []).append((j, r, nd))

    grid = sorted({a for seq in seqs for a in seq.alphas_exact})
    advance: dict[Fraction, list[tuple[int, int]]] = {}
    for j, seq in enumerate(seqs):
        for i, step in enumerate(seq.steps[1:], start=1):
            advance.setdefault(step.alpha_exact, []).append((j, i))
    step_at = [0] * M
    nodes_now = sum(seq.steps[0].node_count for seq in seqs)

    def tally(rows: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        block = contrib[:, rows]
        weights = oob_weight[:, rows, None]
        all_votes = np.zeros((rows.size, K))
        oob_votes = np.zeros((rows.size, K))
        for j in range(M):
            all_votes += block[j]
            oob_votes += block[j] * weights[j]
        return np.argmax(all_votes, axis=1), np.argmax(oob_votes, axis=1)

    every_row = np.arange(N)
    pred_all, pred_oob = tally(every_row)
    wrong_all = pred_all != y
    wrong_oob = (pred_oob != y) & covered
    n_wrong_all = int(wrong_all.sum())
    n_wrong_oob = int(wrong_oob.sum())

    train_err = np.empty(len(grid))
    oob_err = np.empty(len(grid))
    total_nodes = np.empty(len(grid), dtype=np.int64)
    objective = np.empty(len(grid), dtype=np.int64)
    for g, a in enumerate(grid):
        touched = []
        for j, rows, nodes in changes.get(a, ()):
            contrib[j, rows] = seqs[j].base.node_proba[nodes]
            touched.append(rows)
        for j, i in advance.get(a, ()):
            nodes_now += seqs[j].steps[i].node_count - seqs[j].steps[step_at[j]].node_count
            step_at[j] = i
        if touched:
            rows = np.unique(np.concatenate(touched))
            p_all, p_oob = tally(rows)
            new_all = p_all != y[rows]
            new_oob = (p_oob != y[rows]) & covered[rows]
            n_wrong_all += int(new_all.sum()) - int(wrong_all[rows].sum())
            n_wrong_oob += int(new_oob.sum()) - int(wrong_oob[rows].sum())
            wrong_all[rows] = new_all
            wrong_oob[rows] = new_oob
        train_err[g] = n_wrong_all / N
        oob_err[g] = n_wrong_oob / n_cov if n_cov else np.nan
        total_nodes[g] = nodes_now
        objective[g] = n_wrong_oob if oob_voting else n_wrong_all

    best = int(np.flatnonzero(objective == objective.min())[-1])
    threshold = grid[best]
    selected = steps_for_threshold(seqs, threshold)
    curve = ThresholdCurve(tuple(grid), train_err, oob_err, total_nodes, best)
    return replace(ens, selected_steps=selected, method="global",
                   validation_scope="oob" if oob_voting else "all_trees",
                   threshold=threshold, curve=curve, _sequences=seqs)


def steps_for_threshold(seqs: Sequence[PrunedSequence], threshold) -> tuple[int, ...]:
    """Per tree, the last step whose alpha does not exceed ``threshold``."""
    a = threshold if isinstance(threshold, Fraction) else Fraction(threshold)
    if a < 0:
        raise ValueError("threshold must be >= 0")
    return tuple(bisect_right(seq.alphas_exact, a) - 1 for seq in seqs)


def size_ratio(before: Ensemble, after: Ensemble) -> float:
    """Total node count of ``after`` over that of ``before``."""
    if before.M != after.M or any(a.n_nodes != b.n_nodes for a, b in zip(before.trees, after.trees)):
        raise ValueError("size_ratio needs two states of the same ensemble")
    return after.total_nodes() / before.total_nodes()


class AlphaGrid(NamedTuple):
    per_tree: tuple[tuple[float, ...], ...]
    unique_sorted: tuple[float, ...]


def alpha_grid(ens: Ensemble, n_jobs: int = 1) -> AlphaGrid:
    seqs = ens.sequences(n_jobs)
    per_tree = tuple(tuple(float(a) for a in s.alphas_exact) for s in seqs)
    unique = sorted({a for s in seqs for a in s.alphas_exact})
    return AlphaGrid(per_tree, tuple(float(a) for a in unique))

