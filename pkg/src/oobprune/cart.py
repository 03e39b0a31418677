"""CART classification trees with gini splits.

Trees are stored as flat preorder arrays: node 0 is the root and the branch
rooted at node ``t`` occupies the contiguous id range ``[t, subtree_end[t])``.
Three growth flavors are supported:

* ``BT`` (bagged trees): exact best split over all features,
* ``RF`` (random forest): exact best split over ``round(sqrt(d))`` features
  drawn without replacement at every node,
* ``ET`` (extra trees): one uniform random threshold for each of
  ``round(sqrt(d))`` drawn features, best of those.

A sample goes left when ``x[feature] <= threshold``.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from fractions import Fraction
from functools import cached_property
from typing import NamedTuple, Sequence

import numpy as np

from .dataset import Dataset, IndexSample, make_rng

__all__ = [
    "FLAVORS",
    "DecisionTree",
    "GrowthParams",
    "Split",
    "TreeNode",
    "best_split",
    "count_leaves",
    "count_nodes",
    "gini",
    "grow",
    "grow_arrays",
    "misclassification_rate",
    "predict_proba",
]

FLAVORS = ("RF", "BT", "ET")
TREE_FORMAT = "oobprune.tree"
TREE_FORMAT_VERSION = 1


def _as_counts(class_counts) -> np.ndarray:
    counts = np.asarray(class_counts)
    total = counts.sum()
    if total < 1:
        raise ValueError("class counts of an empty node")
    return counts


def gini(class_counts) -> float:
    """Gini impurity ``1 - sum_k p_k**2`` of a count vector."""
    counts = _as_counts(class_counts).astype(np.float64)
    p = counts / counts.sum()
    return float(1.0 - np.dot(p, p))


def misclassification_rate(class_counts) -> float:
    """Fraction of a node's samples not in its majority class."""
    counts = _as_counts(class_counts)
    total = int(counts.sum())
    return (total - int(counts.max())) / total


@dataclass(frozen=True)
class GrowthParams:
    flavor: str = "RF"
    max_features: int | None = None
    min_samples_leaf: int = 1
    seed: int = 0

    def __post_init__(self) -> None:
        flavor = self.flavor.upper()
        if flavor not in FLAVORS:
            raise ValueError(f"unknown flavor {self.flavor!r}; expected one of {FLAVORS}")
        object.__setattr__(self, "flavor", flavor)
        if self.min_samples_leaf < 1:
            raise ValueError("min_samples_leaf must be >= 1")
        if self.max_features is not None and self.max_features < 1:
            raise ValueError("max_features must be >= 1")

    @property
    def mode(self) -> str:
        return "random_threshold" if self.flavor == "ET" else "exact"

    def n_candidates(self, n_features: int) -> int:
        if self.max_features is not None:
            return min(self.max_features, n_features)
        if self.flavor == "BT":
            return n_features
        return max(1, min(n_features, math.floor(math.sqrt(n_features) + 0.5)))


class Split(NamedTuple):
    feature: int
    threshold: float
    impurity_decrease: float


def _midpoint(lo: float, hi: float) -> float:
    c = (lo + hi) / 2.0
    # adjacent floats: the midpoint can round up onto hi
    if not c < hi:
        c = lo
    return c


def _pick_best(num: np.ndarray, den: np.ndarray, valid: np.ndarray, parent_sq: int, n: int):
    """Flat index of the exact best score ``num/den`` among valid entries.

    Callers lay entries out so that flat-index order is the tie-break order;
    the first exact maximum wins.  Returns ``None`` when no valid entry
    strictly improves on the parent impurity.
    """
    if not valid.any():
        return None
    q = np.where(valid, num / np.maximum(den, 1), -1.0)
    top = q.max()
    near = np.flatnonzero(valid.ravel() & (q.ravel() >= top * (1.0 - 1e-9)))
    nums = num.ravel()
    dens = den.ravel()
    best = None
    best_val = None
    for idx in near.tolist():
        val = Fraction(int(nums[idx]), int(dens[idx]))
        if best_val is None or val > best_val:
            best, best_val = idx, val
    # strict impurity decrease: q > sum(counts**2) / n
    if best_val * n <= parent_sq:
        return None
    return best, best_val


def best_split(
    X: np.ndarray,
    y: np.ndarray,
    rows: np.ndarray,
    candidate_features: Sequence[int],
    n_classes: int | None = None,
    mode: str = "exact",
    rng: np.random.Generator | int | None = None,
    min_samples_leaf: int = 1,
) -> Split | None:
    """Best gini split of ``rows`` over ``candidate_features``.

    ``exact`` scans every midpoint between consecutive distinct values;
    ``random_threshold`` draws one threshold per feature uniformly between
    the feature's min and max over ``rows``.  Ties go to the lower feature
    index, then the lower threshold.  ``None`` when no split strictly lowers
    the weighted gini impurity.
    """
    rows = np.asarray(rows, dtype=np.int64)
    feats = np.unique(np.asarray(candidate_features, dtype=np.int64))
    if feats.size == 0:
        raise ValueError("candidate_features is empty")
    K = int(n_classes if n_classes is not None else y.max() + 1)
    n = rows.size
    if n < 2:
        return None
    yn = y[rows]
    total = np.bincount(yn, minlength=K).astype(np.int64)
    parent_sq = int(np.dot(total, total))
    onehot = np.eye(K, dtype=np.int64)[yn]
    Xn = X[np.ix_(rows, feats)]

    if mode == "exact":
        varying = Xn.max(axis=0) > Xn.min(axis=0)
        if not varying.any():
            return None
        if not varying.all():
            feats = feats[varying]
            Xn = Xn[:, varying]
        order = np.argsort(Xn, axis=0, kind="stable")
        xs = np.take_along_axis(Xn, order, axis=0)
        left = np.cumsum(onehot[order], axis=0)[:-1]  # (n-1, m, K)
        n_left = np.arange(1, n, dtype=np.int64)[:, None]
        valid = xs[1:] > xs[:-1]
        # transpose to (m, n-1) so the flat index orders by feature, then threshold
        left = left.transpose(1, 0, 2)
        n_left = n_left.T
        valid = valid.T
    elif mode == "random_threshold":
        if rng is None or isinstance(rng, (int, np.integer)):
            rng = make_rng(0 if rng is None else int(rng))
        u = rng.random(feats.size)
        lo = Xn.min(axis=0)
        hi = Xn.max(axis=0)
        cut = lo + u * (hi - lo)
        cut = np.where(cut < hi, cut, lo)
        goes_left = Xn <= cut
        left = (goes_left.T.astype(np.int64) @ onehot)[:, None, :]  # (m, 1, K)
        n_left = left.sum(axis=2)
        valid = (hi > lo)[:, None]
    else:
        raise ValueError(f"unknown split mode {mode!r}")

    n_right = n - n_left
    if min_samples_leaf > 1:
        valid = valid & (n_left >= min_samples_leaf) & (n_right >= min_samples_leaf)
    right = total - left
    sq_left = np.einsum("...k,...k->...", left, left)
    sq_right = np.einsum("...k,...k->...", right, right)
    num = sq_left * n_right + sq_right * n_left
    den = np.broadcast_to(n_left * n_right, num.shape)
    valid = np.broadcast_to(valid, num.shape)
    picked = _pick_best(num, den, valid, parent_sq, n)
    if picked is None:
        return None
    idx, best_val = picked
    col, pos = divmod(idx, valid.shape[1])
    if mode == "exact":
        threshold = _midpoint(float(xs[pos, col]), float(xs[pos + 1, col]))
    else:
        threshold = float(cut[col])
    decrease = best_val / n - Fraction(parent_sq, n * n)
    return Split(int(feats[col]), threshold, float(decrease))


@dataclass(frozen=True)
class TreeNode:
    node_id: int
    class_counts: tuple[int, ...]
    depth: int
    feature: int | None = None
    threshold: float | None = None
    left: int | None = None
    right: int | None = None

    @property
    def n_t(self) -> int:
        return sum(self.class_counts)

    @property
    def is_leaf(self) -> bool:
        return self.feature is None

    @property
    def prediction(self) -> int:
        return int(np.argmax(self.class_counts))


@dataclass(frozen=True, eq=False)
class DecisionTree:
    """Fitted classification tree in preorder array form.

    ``feature[t] == -1`` marks a leaf.  ``counts[t]`` holds the per-class
    training counts (bootstrap multiplicity included) reaching node ``t``.
    """

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    counts: np.ndarray
    depth: np.ndarray
    n_train: int
    n_features: int
    params: GrowthParams = GrowthParams()

    def __post_init__(self) -> None:
        for name, dtype in (("feature", np.int64), ("threshold", np.float64), ("left", np.int64),
                            ("right", np.int64), ("counts", np.int64), ("depth", np.int64)):
            arr = np.ascontiguousarray(getattr(self, name), dtype=dtype)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        if self.counts.ndim != 2 or self.counts.shape[0] != self.feature.shape[0]:
            raise ValueError("counts must be (n_nodes, n_classes)")

    @property
    def n_nodes(self) -> int:
        return int(self.feature.shape[0])

    @property
    def n_classes(self) -> int:
        return int(self.counts.shape[1])

    @cached_property
    def is_leaf(self) -> np.ndarray:
        out = self.feature < 0
        out.setflags(write=False)
        return out

    @cached_property
    def parent(self) -> np.ndarray:
        out = np.full(self.n_nodes, -1, dtype=np.int64)
        internal = np.flatnonzero(~self.is_leaf)
        out[self.left[internal]] = internal
        out[self.right[internal]] = internal
        out.setflags(write=False)
        return out

    @cached_property
    def subtree_end(self) -> np.ndarray:
        """One past the last preorder id of each node's branch."""
        end = np.arange(1, self.n_nodes + 1, dtype=np.int64)
        for t in range(self.n_nodes - 1, -1, -1):
            if not self.is_leaf[t]:
                end[t] = end[self.right[t]]
        end.setflags(write=False)
        return end

    @cached_property
    def node_proba(self) -> np.ndarray:
        out = self.counts / self.counts.sum(axis=1, keepdims=True)
        out.setflags(write=False)
        return out

    def node(self, t: int) -> TreeNode:
        counts = tuple(int(c) for c in self.counts[t])
        if self.is_leaf[t]:
            return TreeNode(t, counts, int(self.depth[t]))
        return TreeNode(t, counts, int(self.depth[t]), int(self.feature[t]), float(self.threshold[t]),
                        int(self.left[t]), int(self.right[t]))

    @property
    def nodes(self) -> list[TreeNode]:
        return [self.node(t) for t in range(self.n_nodes)]

    def _check_X(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        if X.ndim != 2 or X.shape[1] != self.n_features:
            raise ValueError(f"expected rows with {self.n_features} features, got shape {X.shape}")
        if not np.all(np.isfinite(X)):
            raise ValueError("input contains NaN or infinite values")
        return X

    def apply(self, X, leaf_mask: np.ndarray | None = None) -> np.ndarray:
        """Node id each row of ``X`` lands in.

        ``leaf_mask`` marks extra nodes that stop the descent, which is how
        pruned subtrees are evaluated without materializing them.
        """
        X = self._check_X(X)
        stop = self.is_leaf if leaf_mask is None else self.is_leaf | np.asarray(leaf_mask, dtype=bool)
        node = np.zeros(X.shape[0], dtype=np.int64)
        active = np.arange(X.shape[0])
        while active.size:
            cur = node[active]
            moving = ~stop[cur]
            active = active[moving]
            cur = cur[moving]
            go_left = X[active, self.feature[cur]] <= self.threshold[cur]
            node[active] = np.where(go_left, self.left[cur], self.right[cur])
        return node

    def predict_proba(self, X, leaf_mask: np.ndarray | None = None) -> np.ndarray:
        return self.node_proba[self.apply(X, leaf_mask)]

    def predict(self, X, leaf_mask: np.ndarray | None = None) -> np.ndarray:
        return np.argmax(self.counts[self.apply(X, leaf_mask)], axis=1)

    def to_dict(self) -> dict:
        nodes = []
        for t in range(self.n_nodes):
            leaf = bool(self.is_leaf[t])
            nodes.append({
                "id": t,
                "depth": int(self.depth[t]),
                "counts": [int(c) for c in self.counts[t]],
                "feature": None if leaf else int(self.feature[t]),
                "threshold": None if leaf else float(self.threshold[t]),
                "left": None if leaf else int(self.left[t]),
                "right": None if leaf else int(self.right[t]),
            })
        return {
            "format": TREE_FORMAT,
            "version": TREE_FORMAT_VERSION,
            "n_train": self.n_train,
            "n_features": self.n_features,
            "n_classes": self.n_classes,
            "params": asdict(self.params),
            "nodes": nodes,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "DecisionTree":
        if data.get("format") != TREE_FORMAT or data.get("version") != TREE_FORMAT_VERSION:
            raise ValueError("not a version-1 oobprune tree document")
        nodes = data["nodes"]
        if [nd["id"] for nd in nodes] != list(range(len(nodes))):
            raise ValueError("node ids must be 0..n-1 in order")

        def field(key, missing):
            return [missing if nd[key] is None else nd[key] for nd in nodes]

        return cls(
            feature=field("feature", -1),
            threshold=field("threshold", 0.0),
            left=field("left", -1),
            right=field("right", -1),
            counts=np.array([nd["counts"] for nd in nodes], dtype=np.int64).reshape(len(nodes), data["n_classes"]),
            depth=[nd["depth"] for nd in nodes],
            n_train=int(data["n_train"]),
            n_features=int(data["n_features"]),
            params=GrowthParams(**data["params"]),
        )


def count_nodes(tree: DecisionTree) -> int:
    return tree.n_nodes


def count_leaves(tree: DecisionTree) -> int:
    return int(np.count_nonzero(tree.is_leaf))


def predict_proba(tree: DecisionTree, x) -> np.ndarray:
    """Class distribution of the leaf reached by ``x`` (one row or a matrix)."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 1:
        return tree.predict_proba(x[None, :])[0]
    return tree.predict_proba(x)


def grow(ds: Dataset, sample: IndexSample, params: GrowthParams = GrowthParams()) -> DecisionTree:
    """Grow a tree on the in-bag rows of ``sample`` (duplicates included)."""
    if sample.in_bag.size == 0:
        raise ValueError("cannot grow a tree on an empty in-bag sample")
    if sample.n != ds.n_samples:
        raise ValueError(f"sample drawn for {sample.n} rows, dataset has {ds.n_samples}")
    rows = sample.in_bag
    return grow_arrays(ds.features[rows], ds.labels[rows], ds.n_classes, params)


def grow_arrays(X: np.ndarray, y: np.ndarray, n_classes: int, params: GrowthParams = GrowthParams()) -> DecisionTree:
    """Grow a tree on explicit training arrays.

    Splitting stops at pure nodes, nodes with fewer than
    ``2 * min_samples_leaf`` samples, and nodes without an impurity-reducing
    split.  A finished branch whose leaves misclassify exactly as many
    training samples as its root would alone is collapsed back into that
    root, so no internal node of a returned tree has zero link strength.
    """
    X = np.ascontiguousarray(X, dtype=np.float64)
    y = np.ascontiguousarray(y, dtype=np.int64)
    if X.shape[0] == 0:
        raise ValueError("cannot grow a tree on zero samples")
    n_feat = X.shape[1]
    m = params.n_candidates(n_feat)
    msl = params.min_samples_leaf
    subsample = m < n_feat
    all_feats = np.arange(n_feat)

    feature: list[int] = []
    threshold: list[float] = []
    left: list[int] = []
    right: list[int] = []
    counts: list[np.ndarray] = []
    depth: list[int] = []

    def build(rows: np.ndarray, level: int, path_key: int) -> tuple[int, int]:
        nid = len(feature)
        node_counts = np.bincount(y[rows], minlength=n_classes)
        feature.append(-1)
        threshold.append(0.0)
        left.append(-1)
        right.append(-1)
        counts.append(node_counts)
        depth.append(level)
        n = rows.size
        node_err = n - int(node_counts.max())
        if node_err == 0 or n < 2 * msl:
            return nid, node_err

        # node-local generator keyed by the node's path, not by build order
        rng = make_rng(params.seed, path_key) if (subsample or params.mode != "exact") else None
        feats = np.sort(rng.choice(n_feat, size=m, replace=False)) if subsample else all_feats
        split = best_split(X, y, rows, feats, n_classes, params.mode, rng, msl)
        if split is None:
            return nid, node_err
        goes_left = X[rows, split.feature] <= split.threshold
        lid, lerr = build(rows[goes_left], level + 1, 2 * path_key + 1)
        rid, rerr = build(rows[~goes_left], level + 1, 2 * path_key + 2)
        if lerr + rerr == node_err:
            del feature[nid + 1:], threshold[nid + 1:], left[nid + 1:], right[nid + 1:]
            del counts[nid + 1:], depth[nid + 1:]
            return nid, node_err
        feature[nid] = split.feature
        threshold[nid] = split.threshold
        left[nid] = lid
        right[nid] = rid
        return nid, lerr + rerr

    build(np.arange(X.shape[0]), 0, 0)
    return DecisionTree(
        feature=feature,
        threshold=threshold,
        left=left,
        right=right,
        counts=np.vstack(counts),
        depth=depth,
        n_train=int(X.shape[0]),
        n_features=n_feat,
        params=params,
    )
