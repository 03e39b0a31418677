import numpy as np
import pytest

from oobprune.oracle import (
    GuardExceeded,
    brute_force_best,
    enumerate_subtrees,
    reference_predict,
    routed_counts,
)

from _trees import depth_two_tree, eight_sample_tree, random_small_tree, tree_from_nodes


def test_enumeration_counts():
    assert len(enumerate_subtrees(tree_from_nodes([(-1, 0.0, -1, -1, [1, 0])]))) == 1
    assert len(enumerate_subtrees(eight_sample_tree())) == 2
    assert len(enumerate_subtrees(depth_two_tree())) == 5


def test_enumeration_guard():
    tree, _, _ = random_small_tree(3)
    internal = int((~tree.is_leaf).sum())
    with pytest.raises(GuardExceeded):
        enumerate_subtrees(tree, max_internal=internal - 1)


def test_best_at_zero_keeps_pure_tree():
    assert brute_force_best(depth_two_tree(), 0).node_count == 7


def test_best_for_large_alpha_is_stump():
    assert brute_force_best(depth_two_tree(), 2.0).nodes == {0}


def test_tie_goes_to_fewer_nodes():
    # at alpha 1/4 both the full tree and the stump cost 1/2
    best = brute_force_best(eight_sample_tree(), 0.25)
    assert best.nodes == {0}


def test_routed_counts_match_stored_counts():
    tree, X, y = random_small_tree(11)
    routed = routed_counts(tree, X, y)
    assert all(routed[t] == tree.counts[t].tolist() for t in range(tree.n_nodes))
    a = enumerate_subtrees(tree)
    b = enumerate_subtrees(tree, X, y)
    assert sorted((m.nodes, m.training_misclassified) for m in a) == sorted(
        (m.nodes, m.training_misclassified) for m in b
    )


@pytest.mark.parametrize("labels, expected", [([0, 0, 1], 0), ([1, 1], 1), ([0, 1], 0)])
def test_reference_predict(labels, expected):
    assert reference_predict(labels, x=np.zeros(3)) == expected


def test_reference_predict_empty():
    with pytest.raises(ValueError):
        reference_predict([])
