"""CCP pruning path, per-leaf itemset mining, signature matching."""

import numpy as np
import pytest

from motifscope import signatures as sig_mod
from motifscope.models import DecisionTree
from motifscope.signatures import (
    LeafSignature,
    ccp_path,
    exhaustive_maximal_itemsets,
    greedy_itemset,
    match_signatures,
    mine_leaf_itemset,
    mine_signatures,
    select_pruned,
    tree_to_dot,
)

from oracles import brute_force_maximal_itemsets


def blocky(values_y, reps=10):
    """1-D dataset: feature value v repeated reps times with label values_y[v]."""
    X = np.repeat(np.arange(len(values_y), dtype=float), reps).reshape(-1, 1)
    y = np.repeat(np.asarray(values_y, dtype=np.int64), reps)
    return X, y


def assert_path_invariants(tree, path):
    alphas = path.alphas()
    counts = [e.leaf_count for e in path.entries]
    assert alphas[0] == 0.0
    assert all(b > a for a, b in zip(alphas, alphas[1:]))
    assert all(b < a for a, b in zip(counts, counts[1:]))
    assert counts[0] == tree.n_leaves
    assert counts[-1] == 1
    assert path.entries[0].tree.to_dict() == tree.to_dict()
    for entry in path.entries:
        assert entry.tree.n_leaves == entry.leaf_count


# ---------------------------------------------------------------------------
# pruning path
# ---------------------------------------------------------------------------

def test_ccp_path_depth_one_two_entries():
    X, y = blocky([0, 0, 1, 1])
    tree = DecisionTree.fit(X, y, min_leaf=10)
    assert tree.n_leaves == 2
    path = ccp_path(tree)
    assert_path_invariants(tree, path)
    assert len(path) == 2
    # g(root) = unnormalized gini / W = (40 * 0.5) / 40
    assert path.entries[1].alpha == pytest.approx(0.5)


def test_ccp_path_hand_computed_two_steps():
    # leaves: [c0 x20 | c1 x10 | c2 x10]; R(root)=0.625, inner g=0.25, then 0.375
    X, y = blocky([0, 0, 1, 2])
    tree = DecisionTree.fit(X, y, min_leaf=10)
    assert tree.n_leaves == 3
    path = ccp_path(tree)
    assert_path_invariants(tree, path)
    assert [e.leaf_count for e in path.entries] == [3, 2, 1]
    assert path.alphas() == pytest.approx([0.0, 0.25, 0.375])


def test_ccp_path_merges_equal_alphas():
    # four pure leaves, perfectly balanced: every node has g = 0.25, so the
    # whole tree collapses in a single step
    X, y = blocky([0, 1, 2, 3])
    tree = DecisionTree.fit(X, y, min_leaf=10)
    assert tree.n_leaves == 4
    path = ccp_path(tree)
    assert_path_invariants(tree, path)
    assert [e.leaf_count for e in path.entries] == [4, 1]
    assert path.alphas() == pytest.approx([0.0, 0.25])


def test_ccp_path_single_leaf_tree():
    X = np.zeros((20, 1))
    y = np.zeros(20, dtype=np.int64)
    tree = DecisionTree.fit(X, y, min_leaf=10, n_classes=2)
    path = ccp_path(tree)
    assert len(path) == 1
    assert path.entries[0].leaf_count == 1


def test_ccp_path_invariants_on_random_trees(rng):
    for _ in range(10):
        n = int(rng.integers(80, 400))
        d = int(rng.integers(2, 6))
        X = rng.normal(size=(n, d))
        y = (X[:, 0] + 0.5 * rng.normal(size=n) > 0).astype(np.int64) + (
            X[:, 1] > 0.5
        ).astype(np.int64)
        tree = DecisionTree.fit(X, y, min_leaf=5)
        assert_path_invariants(tree, ccp_path(tree))


def test_ccp_path_invariants_on_corpus_tree(small_tree):
    assert_path_invariants(small_tree, ccp_path(small_tree))


def test_pruned_tree_prediction_tie_breaks_low_index():
    X, y = blocky([0, 0, 1, 2])
    tree = DecisionTree.fit(X, y, min_leaf=10)
    pruned, entry = select_pruned(ccp_path(tree), target_leaves=2)
    assert entry.leaf_count == 2
    # the collapsed right leaf holds 10 of class 1 and 10 of class 2
    assert pruned.predict(np.array([[3.0]]))[0] == 1


# ---------------------------------------------------------------------------
# snapshot selection
# ---------------------------------------------------------------------------

def test_select_pruned_exact_leaf_target():
    X, y = blocky([0, 0, 1, 2])
    path = ccp_path(DecisionTree.fit(X, y, min_leaf=10))
    pruned, entry = select_pruned(path, target_leaves=2)
    assert entry.leaf_count == 2 and pruned.n_leaves == 2


def test_select_pruned_unreachable_target_warns():
    X, y = blocky([0, 1, 2, 3])  # path has only 4-leaf and 1-leaf snapshots
    path = ccp_path(DecisionTree.fit(X, y, min_leaf=10))
    with pytest.warns(UserWarning, match="no pruning level with exactly 3"):
        _, entry = select_pruned(path, target_leaves=3)
    assert entry.leaf_count == 1  # nearest achievable level at or below target


def test_select_pruned_by_alpha():
    X, y = blocky([0, 0, 1, 2])
    path = ccp_path(DecisionTree.fit(X, y, min_leaf=10))  # alphas 0, 0.25, 0.375
    _, entry = select_pruned(path, alpha=0.0)
    assert entry.leaf_count == 3
    _, entry = select_pruned(path, alpha=0.3)
    assert entry.leaf_count == 2
    _, entry = select_pruned(path, alpha=10.0)
    assert entry.leaf_count == 1


def test_select_pruned_argument_validation():
    X, y = blocky([0, 1])
    path = ccp_path(DecisionTree.fit(X, y, min_leaf=10))
    with pytest.raises(ValueError):
        select_pruned(path)
    with pytest.raises(ValueError):
        select_pruned(path, target_leaves=2, alpha=0.1)
    with pytest.raises(ValueError):
        select_pruned(path, target_leaves=0)
    with pytest.raises(ValueError):
        select_pruned(path, alpha=-0.5)


# ---------------------------------------------------------------------------
# itemset mining
# ---------------------------------------------------------------------------

def presence_from_rows(rows, n_cols):
    mat = np.zeros((len(rows), n_cols), dtype=bool)
    for i, cols in enumerate(rows):
        mat[i, list(cols)] = True
    return mat


def test_greedy_itemset_grows_while_support_holds():
    # a and b co-occur on 9/10 rows; both survive
    rows = [{0, 1}] * 9 + [set()]
    chosen, support = greedy_itemset(presence_from_rows(rows, 2), ["a", "b"])
    assert sorted(chosen) == [0, 1]
    assert support == pytest.approx(0.9)


def test_greedy_itemset_rejects_when_joint_support_drops():
    # a on rows 0-8, d on rows 1-9: joint 0.8 is not strictly above threshold
    rows = [{0} if i == 0 else ({0, 1} if i <= 8 else {1}) for i in range(10)]
    chosen, support = greedy_itemset(presence_from_rows(rows, 2), ["a", "d"])
    assert chosen == [0]  # tie on single support, lexicographic: a before d
    assert support == pytest.approx(0.9)


def test_greedy_itemset_orders_by_support_then_key():
    # c has the highest support and is tried first despite its key
    rows = [{0, 1, 2}] * 9 + [{2}]
    presence = presence_from_rows(rows, 3)
    chosen, _ = greedy_itemset(presence, ["b", "a", "c"])
    assert chosen[0] == 2  # the 1.0-support item
    assert sorted(chosen) == [0, 1, 2]


def test_greedy_itemset_threshold_is_strict():
    rows = [{0}] * 8 + [set()] * 2  # support exactly 0.8
    chosen, support = greedy_itemset(presence_from_rows(rows, 1), ["a"])
    assert chosen == [] and support == 0.0


def test_exhaustive_matches_brute_force_oracle(rng):
    for _ in range(25):
        n = int(rng.integers(5, 30))
        d = int(rng.integers(1, 8))
        presence = rng.random((n, d)) < rng.uniform(0.5, 1.0)
        threshold = float(rng.choice([0.5, 0.7, 0.8]))
        got = {(items, round(sup, 12)) for items, sup in exhaustive_maximal_itemsets(presence, threshold)}
        want = {
            (items, round(sup, 12)) for items, sup in brute_force_maximal_itemsets(presence, threshold)
        }
        assert got == want


def test_exhaustive_rejects_oversized_universe():
    presence = np.ones((4, 16), dtype=bool)
    with pytest.raises(ValueError):
        exhaustive_maximal_itemsets(presence, 0.5, max_items=15)


def test_mine_leaf_itemset_flags_greedy_shortfall():
    # x alone (0.95) blocks the longer {y, z} (0.85): the greedy pass yields a
    # shorter set than the exhaustive maximum and must say so
    rows = []
    for i in range(20):
        cols = set()
        if i >= 1:
            cols.add(0)  # x on rows 1-19
        if i <= 16:
            cols.update({1, 2})  # y, z on rows 0-16
        rows.append(cols)
    presence = presence_from_rows(rows, 3)
    chosen, support, notes = mine_leaf_itemset(presence, ["x", "y", "z"], method="greedy")
    assert chosen == [0] and support == pytest.approx(0.95)
    assert len(notes) == 1 and "shorter than exhaustive maximum 2" in notes[0]
    chosen, support, notes = mine_leaf_itemset(presence, ["x", "y", "z"], method="exhaustive")
    assert sorted(chosen) == [1, 2] and support == pytest.approx(0.85)
    assert notes == []


def test_mine_leaf_itemset_no_candidates():
    presence = np.zeros((5, 3), dtype=bool)
    for method in ("greedy", "exhaustive"):
        chosen, support, notes = mine_leaf_itemset(presence, ["a", "b", "c"], method=method)
        assert chosen == [] and support == 0.0 and notes == []


# ---------------------------------------------------------------------------
# signature mining and matching
# ---------------------------------------------------------------------------

def test_mine_signatures_per_leaf(small_tree, small_dataset):
    sigs, notes = mine_signatures(
        small_tree, small_dataset.X, small_dataset.vocabulary, small_dataset.classes
    )
    assert notes == []
    leaf_ids = {leaf.leaf_id for leaf in small_tree.leaves()}
    assert {s.leaf_id for s in sigs} <= leaf_ids
    assert len(sigs) >= 1
    for s in sigs:
        assert s.group in small_dataset.classes
        assert s.items == sorted(s.items)
        assert set(s.items) <= set(small_dataset.vocabulary)
        assert 0.0 <= s.probability <= 1.0
        if s.items:
            assert s.support > 0.8
            for item in s.items:
                assert s.item_supports[item] >= s.support - 1e-12
        else:
            assert s.support == 0.0


def test_mine_signatures_validates_method(small_tree, small_dataset):
    with pytest.raises(ValueError):
        mine_signatures(
            small_tree, small_dataset.X, small_dataset.vocabulary, small_dataset.classes,
            method="psychic",
        )


def make_sig(leaf_id, group, items):
    return LeafSignature(
        leaf_id=leaf_id,
        group=group,
        probability=1.0,
        samples=10,
        items=items,
        item_supports={i: 1.0 for i in items},
        support=1.0 if items else 0.0,
    )


def test_match_signatures_subset_semantics():
    sigs = [
        make_sig(0, "Swap", ["a", "b"]),
        make_sig(1, "Mint", ["c"]),
        make_sig(2, "Swap", ["a"]),
        make_sig(3, "Borrow", []),  # empty signatures never match
    ]
    leaves, groups = match_signatures({"a": 2, "b": 1, "zz": 5}, sigs)
    assert leaves == [0, 2]
    assert groups == ["Swap"]
    leaves, groups = match_signatures({"a": 1, "c": 3}, sigs)
    assert leaves == [1, 2]  # ascending leaf ids
    assert groups == ["Mint", "Swap"]  # unique groups, sorted
    leaves, groups = match_signatures({"b": 1}, sigs)
    assert leaves == [] and groups == []


def test_match_ignores_zero_count_features():
    sigs = [make_sig(0, "Swap", ["a"])]
    assert match_signatures({"a": 0}, sigs) == ([], [])


def test_tree_to_dot_output(small_tree, small_dataset):
    dot = tree_to_dot(small_tree, small_dataset.vocabulary, small_dataset.classes)
    assert dot.startswith("digraph pruned_tree {")
    assert dot.rstrip().endswith("}")
    assert 'label="yes"' in dot and 'label="no"' in dot
    assert any(cls in dot for cls in small_dataset.classes)
    n_leaf_boxes = dot.count("shape=box")
    assert n_leaf_boxes == small_tree.n_leaves
