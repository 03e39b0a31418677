"""Brute-force references for the test suite.

Nothing here is fast and nothing here reuses the bookkeeping in ``cart`` or
``ccp``: node counts are recomputed by routing raw samples one at a time and
subtree risks are summed from scratch, so agreement with the production code
is a genuine cross-check.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from itertools import product
from numbers import Rational

import numpy as np

from .cart import DecisionTree, Split

__all__ = [
    "GuardExceeded",
    "SubtreeMask",
    "brute_force_best",
    "brute_force_split",
    "enumerate_subtrees",
    "reference_predict",
    "routed_counts",
]

MAX_INTERNAL = 20


class GuardExceeded(ValueError):
    pass


@dataclass(frozen=True)
class SubtreeMask:
    collapsed: frozenset[int]  # internal nodes of the base tree acting as leaves
    nodes: frozenset[int]
    leaf_count: int
    node_count: int
    training_misclassified: int


def routed_counts(tree: DecisionTree, X, y) -> dict[int, list[int]]:
    """Per-node class counts obtained by walking every sample down the tree."""
    K = tree.n_classes
    counts = {t: [0] * K for t in range(tree.n_nodes)}
    for row, label in zip(np.asarray(X, dtype=float).tolist(), np.asarray(y).tolist()):
        t = 0
        while True:
            counts[t][label] += 1
            f = int(tree.feature[t])
            if f < 0:
                break
            t = int(tree.left[t]) if row[f] <= float(tree.threshold[t]) else int(tree.right[t])
    return counts


def enumerate_subtrees(tree: DecisionTree, X_train=None, y_train=None, max_internal: int = MAX_INTERNAL) -> list[SubtreeMask]:
    """All pruned subtrees containing the root.

    Training errors come from re-routing ``(X_train, y_train)`` when given,
    otherwise from the tree's stored counts.
    """
    internal = [t for t in range(tree.n_nodes) if tree.feature[t] >= 0]
    if len(internal) > max_internal:
        raise GuardExceeded(f"{len(internal)} internal nodes exceeds the guard of {max_internal}")
    if X_train is not None:
        counts = routed_counts(tree, X_train, y_train)
    else:
        counts = {t: [int(c) for c in tree.counts[t]] for t in range(tree.n_nodes)}
    err = {t: sum(c) - max(c) for t, c in counts.items()}

    def options(t: int) -> list[tuple[frozenset, frozenset, int, int]]:
        # (nodes, collapsed, leaves, errors)
        if tree.feature[t] < 0:
            return [(frozenset([t]), frozenset(), 1, err[t])]
        out = [(frozenset([t]), frozenset([t]), 1, err[t])]
        for (nl, cl, ll, el), (nr, cr, lr, er) in product(options(int(tree.left[t])), options(int(tree.right[t]))):
            out.append((nl | nr | {t}, cl | cr, ll + lr, el + er))
        return out

    return [SubtreeMask(c, n, leaves, len(n), e) for n, c, leaves, e in options(0)]


def brute_force_best(
    tree: DecisionTree,
    alpha: float | Fraction,
    X_train=None,
    y_train=None,
    masks: list[SubtreeMask] | None = None,
) -> SubtreeMask:
    """Exhaustive minimizer of ``R(T) + alpha * |leaves(T)|``, fewest nodes on ties.

    Compared as ``N * q * R_alpha`` in integers where ``alpha = p / q``.
    """
    if masks is None:
        masks = enumerate_subtrees(tree, X_train, y_train)
    a = alpha if isinstance(alpha, Rational) else Fraction(alpha)
    p, q = a.numerator, a.denominator
    N = tree.n_train if X_train is None else len(X_train)
    return min(masks, key=lambda m: (m.training_misclassified * q + p * N * m.leaf_count, m.node_count))


def reference_predict(y_train, x=None, n_classes: int | None = None) -> int:
    """Majority label of the training rows; ``x`` is ignored."""
    labels = [int(v) for v in y_train]
    if not labels:
        raise ValueError("no training labels")
    K = n_classes if n_classes is not None else max(labels) + 1
    tally = [0] * K
    for v in labels:
        tally[v] += 1
    return tally.index(max(tally))


def brute_force_split(X, y, rows, candidate_features) -> Split | None:
    """Exhaustive (feature, midpoint) scan with exact gini arithmetic."""
    X = np.asarray(X, dtype=float)
    rows = [int(r) for r in rows]
    labels = [int(y[r]) for r in rows]
    n = len(rows)
    classes = sorted(set(labels))

    def impurity(group: list[int]) -> Fraction:
        m = len(group)
        return 1 - sum(Fraction(group.count(k), m) ** 2 for k in classes)

    parent = impurity(labels)
    best = None
    for f in sorted(set(int(j) for j in candidate_features)):
        values = sorted(set(float(X[r, f]) for r in rows))
        for lo, hi in zip(values, values[1:]):
            c = (lo + hi) / 2.0
            if not c < hi:
                c = lo
            left = [lab for r, lab in zip(rows, labels) if X[r, f] <= c]
            right = [lab for r, lab in zip(rows, labels) if X[r, f] > c]
            decrease = parent - (len(left) * impurity(left) + len(right) * impurity(right)) / n
            if decrease > 0 and (best is None or decrease > best[0]):
                best = (decrease, f, c)
    if best is None:
        return None
    return Split(best[1], best[2], float(best[0]))
