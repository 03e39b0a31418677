"""Weakest-link cost-complexity pruning.

Risks are kept as integer misclassification counts; a node's risk
``r(t) * p(t)`` is ``errors(t) / N`` where ``N`` is the tree's training size.
Link strengths ``g(t)`` are therefore ratios of small integers and every
comparison between them is exact.  Floating-point alphas only appear at the
public surface.

A pruned subtree is never copied.  ``PrunedSequence.collapse_step[t]`` is the
first step at which node ``t`` stops the descent of a sample; step ``i`` of
the sequence is evaluated by routing with ``collapse_step <= i`` as the leaf
mask.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from functools import cached_property
from typing import NamedTuple

import numpy as np

from .cart import DecisionTree, TreeNode, misclassification_rate

__all__ = [
    "EmptyValidationError",
    "PruneStep",
    "PrunedSequence",
    "RoutingIntervals",
    "link_strength",
    "node_risk",
    "routing_intervals",
    "select_best_subtree",
    "step_errors",
    "subtree_risk",
    "weakest_link_sequence",
]


class EmptyValidationError(ValueError):
    """No validation rows were supplied; the caller decides the fallback."""


def node_risk(node: TreeNode | np.ndarray, n_train: int) -> float:
    """``r(t) * p(t)``: misclassification rate times the node's share of N."""
    counts = np.asarray(node.class_counts if isinstance(node, TreeNode) else node)
    n_t = int(counts.sum())
    if not 1 <= n_t <= n_train:
        raise ValueError(f"need 1 <= n_t <= n_train, got n_t={n_t}, n_train={n_train}")
    return misclassification_rate(counts) * n_t / n_train


def _node_errors(tree: DecisionTree) -> np.ndarray:
    return tree.counts.sum(axis=1) - tree.counts.max(axis=1)


def _check_node(tree: DecisionTree, t: int) -> None:
    if not 0 <= t < tree.n_nodes:
        raise KeyError(f"node {t} not in tree with {tree.n_nodes} nodes")


def subtree_risk(tree: DecisionTree, t: int) -> float:
    """Summed leaf risk of the branch rooted at ``t``."""
    _check_node(tree, t)
    span = slice(t, tree.subtree_end[t])
    errors = _node_errors(tree)[span][tree.is_leaf[span]]
    return int(errors.sum()) / tree.n_train


def link_strength(tree: DecisionTree, t: int) -> float:
    """Per-leaf training-risk increase from collapsing the branch at ``t``."""
    _check_node(tree, t)
    if tree.is_leaf[t]:
        raise ValueError(f"node {t} is a leaf")
    span = slice(t, tree.subtree_end[t])
    leaves = int(np.count_nonzero(tree.is_leaf[span]))
    node_err = int(_node_errors(tree)[t])
    branch_err = int(_node_errors(tree)[span][tree.is_leaf[span]].sum())
    return float(Fraction(node_err - branch_err, (leaves - 1) * tree.n_train))


@dataclass(frozen=True)
class PruneStep:
    alpha_exact: Fraction
    pruned_node_ids: frozenset[int]
    leaf_count: int
    node_count: int

    @property
    def alpha(self) -> float:
        return float(self.alpha_exact)


@dataclass(frozen=True, eq=False)
class PrunedSequence:
    """Nested subtrees of ``base`` indexed by increasing alpha.

    Step 0 has alpha 0.  For trees without zero-strength branches (every tree
    from ``grow``) it is the unpruned tree; otherwise the zero-cost collapses
    are folded into it.  The last step is the root stump.
    """

    base: DecisionTree
    steps: tuple[PruneStep, ...]

    def __len__(self) -> int:
        return len(self.steps)

    @property
    def alphas(self) -> np.ndarray:
        return np.array([s.alpha for s in self.steps])

    @property
    def alphas_exact(self) -> list[Fraction]:
        return [s.alpha_exact for s in self.steps]

    @cached_property
    def collapse_step(self) -> np.ndarray:
        """Step at which each node becomes a leaf; ``len(self)`` if never."""
        out = np.full(self.base.n_nodes, len(self.steps), dtype=np.int64)
        out[self.base.is_leaf] = 0
        for i, step in enumerate(self.steps):
            for t in step.pruned_node_ids:
                out[t] = i
        out.setflags(write=False)
        return out

    def _index(self, i: int) -> int:
        if not -len(self.steps) <= i < len(self.steps):
            raise IndexError(f"step {i} out of range for {len(self.steps)} steps")
        return i % len(self.steps)

    def leaf_mask(self, i: int) -> np.ndarray:
        """Routing stop mask for step ``i`` (pass to ``DecisionTree.apply``)."""
        return self.collapse_step <= self._index(i)

    def node_mask(self, i: int) -> np.ndarray:
        """Nodes present in the subtree of step ``i``."""
        i = self._index(i)
        present = np.ones(self.base.n_nodes, dtype=bool)
        end = self.base.subtree_end
        for t in np.flatnonzero((self.collapse_step <= i) & ~self.base.is_leaf):
            present[t + 1:end[t]] = False
        return present

    def node_ids(self, i: int) -> frozenset[int]:
        return frozenset(np.flatnonzero(self.node_mask(i)).tolist())

    def predict_proba(self, X, i: int) -> np.ndarray:
        return self.base.predict_proba(X, self.leaf_mask(i))

    def subtree(self, i: int) -> DecisionTree:
        """Materialize step ``i`` as a standalone tree (renumbered preorder)."""
        i = self._index(i)
        tree = self.base
        keep = np.flatnonzero(self.node_mask(i))
        new_id = np.full(tree.n_nodes, -1, dtype=np.int64)
        new_id[keep] = np.arange(keep.size)
        stop = self.leaf_mask(i)[keep]
        feature = np.where(stop, -1, tree.feature[keep])
        return DecisionTree(
            feature=feature,
            threshold=np.where(stop, 0.0, tree.threshold[keep]),
            left=np.where(stop, -1, new_id[np.maximum(tree.left[keep], 0)]),
            right=np.where(stop, -1, new_id[np.maximum(tree.right[keep], 0)]),
            counts=tree.counts[keep],
            depth=tree.depth[keep],
            n_train=tree.n_train,
            n_features=tree.n_features,
            params=tree.params,
        )

    def to_dict(self) -> dict:
        return {
            "base": self.base.to_dict(),
            "steps": [
                {
                    "alpha": s.alpha,
                    "alpha_num": s.alpha_exact.numerator,
                    "alpha_den": s.alpha_exact.denominator,
                    "pruned": sorted(s.pruned_node_ids),
                    "leaf_count": s.leaf_count,
                    "node_count": s.node_count,
                }
                for s in self.steps
            ],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "PrunedSequence":
        steps = tuple(
            PruneStep(Fraction(s["alpha_num"], s["alpha_den"]), frozenset(s["pruned"]), s["leaf_count"], s["node_count"])
            for s in data["steps"]
        )
        return cls(DecisionTree.from_dict(data["base"]), steps)


def weakest_link_sequence(tree: DecisionTree) -> PrunedSequence:
    """Collapse the weakest links repeatedly until only the root remains.

    Every internal node attaining the minimum link strength is collapsed in
    the same step (only the topmost of nested minimizers is recorded), so the
    recorded alphas are strictly increasing.
    """
    n_nodes = tree.n_nodes
    is_leaf = tree.is_leaf
    end = tree.subtree_end
    parent = tree.parent
    node_err = _node_errors(tree).astype(np.int64)

    # branch statistics via preorder prefix sums over leaves
    leaf_err_cum = np.concatenate(([0], np.cumsum(np.where(is_leaf, node_err, 0))))
    leaf_cnt_cum = np.concatenate(([0], np.cumsum(is_leaf.astype(np.int64))))
    ids = np.arange(n_nodes)
    branch_err = leaf_err_cum[end] - leaf_err_cum[ids]
    branch_leaves = leaf_cnt_cum[end] - leaf_cnt_cum[ids]
    branch_size = end - ids

    active = ~is_leaf
    steps: list[PruneStep] = []
    pending: list[int] = []
    alpha_here = Fraction(0)
    leaf_count = int(branch_leaves[0])
    node_count = n_nodes

    while active.any():
        idx = np.flatnonzero(active)
        num = node_err[idx] - branch_err[idx]
        den = branch_leaves[idx] - 1
        g = num / den
        cand = idx[g == g.min()]
        # exact minimum among float-equal candidates
        best_num = best_den = None
        winners: list[int] = []
        for t in cand.tolist():
            a, b = int(node_err[t] - branch_err[t]), int(branch_leaves[t] - 1)
            if best_num is None or a * best_den < best_num * b:
                best_num, best_den, winners = a, b, [t]
            elif a * best_den == best_num * b:
                winners.append(t)
        alpha = Fraction(best_num, best_den * tree.n_train)

        if alpha != alpha_here:
            steps.append(PruneStep(alpha_here, frozenset(pending), leaf_count, node_count))
            pending = []
            alpha_here = alpha

        covered_to = -1
        for w in winners:  # ascending preorder: a nested winner follows its ancestor
            if w < covered_to:
                continue
            covered_to = int(end[w])
            d_err = int(branch_err[w] - node_err[w])
            d_leaves = int(branch_leaves[w] - 1)
            d_size = int(branch_size[w] - 1)
            a = parent[w]
            while a >= 0:
                branch_err[a] -= d_err
                branch_leaves[a] -= d_leaves
                branch_size[a] -= d_size
                a = parent[a]
            branch_err[w] = node_err[w]
            branch_leaves[w] = 1
            branch_size[w] = 1
            active[w:end[w]] = False
            leaf_count -= d_leaves
            node_count -= d_size
            pending.append(w)

    steps.append(PruneStep(alpha_here, frozenset(pending), leaf_count, node_count))
    return PrunedSequence(tree, tuple(steps))


class RoutingIntervals(NamedTuple):
    """Where each row lands over a range of steps.

    Row ``rows[e]`` lands in node ``nodes[e]`` for every step in
    ``[start[e], stop[e])``.  Each row has one interval starting at 0 and the
    intervals of a row tile ``[0, n_steps)``.
    """

    rows: np.ndarray
    start: np.ndarray
    stop: np.ndarray
    nodes: np.ndarray


def routing_intervals(seq: PrunedSequence, X) -> RoutingIntervals:
    tree = seq.base
    n_steps = len(seq)
    leaf = tree.apply(X)
    n = leaf.size
    parent = tree.parent
    cstep = seq.collapse_step

    # path matrix from each row's leaf upward, padded with -1 past the root
    levels = [leaf]
    cur = leaf
    while True:
        cur = np.where(cur >= 0, parent[np.maximum(cur, 0)], -1)
        if (cur < 0).all():
            break
        levels.append(cur)
    path = np.stack(levels, axis=1)
    when = np.where(path >= 0, cstep[np.maximum(path, 0)], n_steps)
    # first step at which something above takes over
    above = np.minimum.accumulate(when[:, ::-1], axis=1)[:, ::-1]
    until = np.concatenate((above[:, 1:], np.full((n, 1), n_steps)), axis=1)
    live = (when < n_steps) & (until > when)
    r, k = np.nonzero(live)
    return RoutingIntervals(r, when[r, k], until[r, k], path[r, k])


def step_errors(seq: PrunedSequence, X, y) -> np.ndarray:
    """Misclassified-row count of every step's subtree on ``(X, y)``."""
    y = np.asarray(y, dtype=np.int64)
    iv = routing_intervals(seq, X)
    pred = np.argmax(seq.base.counts, axis=1)
    wrong = (pred[iv.nodes] != y[iv.rows]).astype(np.int64)
    diff = np.zeros(len(seq) + 1, dtype=np.int64)
    np.add.at(diff, iv.start, wrong)
    np.add.at(diff, iv.stop, -wrong)
    return np.cumsum(diff)[:-1]


def select_best_subtree(seq: PrunedSequence, X_val, y_val) -> tuple[float, int]:
    """Step with the fewest validation errors; ties go to the smallest subtree.

    Returns ``(alpha, step_index)``.
    """
    X_val = np.asarray(X_val, dtype=np.float64)
    if X_val.ndim != 2 or X_val.shape[0] == 0:
        raise EmptyValidationError("validation set is empty")
    errors = step_errors(seq, X_val, y_val)
    best = int(np.flatnonzero(errors == errors.min())[-1])
    return seq.steps[best].alpha, best
