"""Logistic regression, decision tree, and random forest internals."""

import numpy as np
import pytest

from motifscope import models
from motifscope.models import DecisionTree, LogisticModel, RandomForest

from oracles import central_difference


def blobs(rng, n_per=60, centers=((0, 0), (4, 4), (0, 5)), scale=0.5):
    X, y = [], []
    for label, center in enumerate(centers):
        X.append(rng.normal(center, scale, size=(n_per, len(center))))
        y.extend([label] * n_per)
    return np.vstack(X), np.array(y, dtype=np.int64)


# ---------------------------------------------------------------------------
# logistic loss and gradient
# ---------------------------------------------------------------------------

def test_logistic_loss_at_origin():
    X = np.array([[1.0, 2.0], [3.0, -1.0]])
    t = np.array([1.0, 0.0])
    sw = np.array([1.0, 3.0])
    loss, grad = models.logistic_loss_grad(np.zeros(3), X, t, sw, l2=0.0)
    assert loss == pytest.approx(np.log(2.0))
    resid = sw * (0.5 - t) / sw.sum()
    assert grad[:2] == pytest.approx(X.T @ resid)
    assert grad[2] == pytest.approx(resid.sum())


def test_logistic_gradient_matches_finite_differences(rng):
    for _ in range(5):
        n = int(rng.integers(3, 30))
        d = int(rng.integers(1, 8))
        X = rng.normal(size=(n, d))
        t = (rng.random(n) < 0.5).astype(float)
        sw = rng.uniform(0.5, 3.0, size=n)
        l2 = float(rng.uniform(0.0, 2.0))
        params = rng.normal(size=d + 1)
        _, grad = models.logistic_loss_grad(params, X, t, sw, l2)
        fd = central_difference(lambda p: models.logistic_loss_grad(p, X, t, sw, l2)[0], params)
        denom = max(float(np.linalg.norm(grad)), 1e-12)
        assert np.linalg.norm(fd - grad) / denom < 1e-6


def test_l2_penalizes_weights_not_bias():
    X = np.zeros((2, 2))
    t = np.array([0.0, 1.0])
    sw = np.ones(2)
    params = np.array([3.0, -2.0, 5.0])  # last entry is the bias
    loss0, grad0 = models.logistic_loss_grad(params, X, t, sw, l2=0.0)
    loss1, grad1 = models.logistic_loss_grad(params, X, t, sw, l2=2.0)
    assert loss1 - loss0 == pytest.approx(0.5 * 2.0 * (9.0 + 4.0))
    assert grad1[0] == pytest.approx(2.0 * 3.0)  # pure penalty term: X is zero
    assert grad1[2] == pytest.approx(grad0[2])  # bias unpenalized


def test_loss_invariant_to_weight_scale():
    rng = np.random.default_rng(5)
    X = rng.normal(size=(20, 4))
    t = (rng.random(20) < 0.5).astype(float)
    sw = rng.uniform(0.5, 2.0, size=20)
    params = rng.normal(size=5)
    loss_a, grad_a = models.logistic_loss_grad(params, X, t, sw, l2=1.0)
    loss_b, grad_b = models.logistic_loss_grad(params, X, t, 1000.0 * sw, l2=1.0)
    assert loss_b == pytest.approx(loss_a, rel=1e-12)
    assert grad_b == pytest.approx(grad_a, rel=1e-12)


def test_logistic_model_separable_and_round_trip(rng):
    X, y = blobs(rng)
    model = LogisticModel.fit(X, y, n_classes=3, l2=0.1)
    assert (model.predict(X) == y).mean() == 1.0
    clone = LogisticModel.from_dict(model.to_dict())
    assert (clone.predict(X) == model.predict(X)).all()
    assert clone.decision_function(X) == pytest.approx(model.decision_function(X))


def test_logistic_model_applies_class_weights():
    # 1-D data, overlapping classes with a 9:1 imbalance: unweighted LR calls
    # almost everything the majority class, balanced weights recover class 1
    rng = np.random.default_rng(0)
    X = np.vstack([rng.normal(0.0, 1.0, size=(180, 1)), rng.normal(1.0, 1.0, size=(20, 1))])
    y = np.repeat([0, 1], [180, 20])
    from motifscope.learn import sample_weights

    plain = LogisticModel.fit(X, y, n_classes=2)
    weighted = LogisticModel.fit(X, y, sample_weights(y, 2), n_classes=2)
    recall_plain = (plain.predict(X)[y == 1] == 1).mean()
    recall_weighted = (weighted.predict(X)[y == 1] == 1).mean()
    assert recall_weighted > recall_plain


# ---------------------------------------------------------------------------
# decision tree
# ---------------------------------------------------------------------------

def test_tree_pure_target_is_single_leaf():
    X = np.arange(20, dtype=float).reshape(-1, 1)
    tree = DecisionTree.fit(X, np.zeros(20, dtype=np.int64), n_classes=2, min_leaf=1)
    assert tree.root.is_leaf
    assert tree.n_leaves == 1
    assert tree.predict(X).tolist() == [0] * 20


def test_tree_learns_midpoint_threshold():
    X = np.array([[0.0], [1.0], [2.0], [3.0]])
    y = np.array([0, 0, 1, 1])
    tree = DecisionTree.fit(X, y, min_leaf=1)
    assert not tree.root.is_leaf
    assert tree.root.feature == 0
    assert tree.root.threshold == pytest.approx(1.5)
    assert tree.n_leaves == 2
    assert tree.predict(np.array([[1.4], [1.6]])).tolist() == [0, 1]


def test_tree_min_leaf_enforced(rng):
    X = rng.normal(size=(200, 5))
    y = (X[:, 0] + 0.3 * rng.normal(size=200) > 0).astype(np.int64)
    tree = DecisionTree.fit(X, y, min_leaf=17)
    assert tree.n_leaves > 1
    for leaf in tree.leaves():
        assert leaf.n_samples >= 17


def test_tree_tie_breaks_to_lowest_feature():
    col = np.array([0.0, 0.0, 1.0, 1.0])
    X = np.column_stack([col, col])  # two identical perfect splitters
    y = np.array([0, 0, 1, 1])
    tree = DecisionTree.fit(X, y, min_leaf=1)
    assert tree.root.feature == 0


def test_tree_leaf_ids_preorder_and_apply(rng):
    X = rng.normal(size=(300, 4))
    y = ((X[:, 0] > 0).astype(int) + (X[:, 1] > 0).astype(int)).astype(np.int64)
    tree = DecisionTree.fit(X, y, min_leaf=10)
    leaves = tree.leaves()
    assert [leaf.leaf_id for leaf in leaves] == list(range(tree.n_leaves))
    assigned = tree.apply(X)
    assert set(assigned.tolist()) <= set(range(tree.n_leaves))
    # apply and predict agree with a per-row walk down the tree
    for i in rng.choice(len(X), size=20, replace=False):
        node = tree.root
        while not node.is_leaf:
            node = node.left if X[i, node.feature] <= node.threshold else node.right
        assert assigned[i] == node.leaf_id
        assert tree.predict(X[i : i + 1])[0] == node.prediction


def test_tree_decision_path():
    X = np.array([[0.0], [1.0], [2.0], [3.0]])
    y = np.array([0, 0, 1, 1])
    tree = DecisionTree.fit(X, y, min_leaf=1)
    path = tree.decision_path(np.array([0.5]))
    assert len(path) == 1
    node, went_left = path[0]
    assert node is tree.root and went_left


def test_tree_weighted_majority():
    X = np.zeros((3, 1))
    y = np.array([0, 0, 1])
    tree = DecisionTree.fit(X, y, sample_weight=np.array([1.0, 1.0, 5.0]), min_leaf=3)
    assert tree.root.is_leaf
    assert tree.root.value.tolist() == [2.0, 5.0]
    assert tree.predict(X).tolist() == [1, 1, 1]


def test_node_gini_formula():
    value = np.array([2.0, 5.0])
    w = value.sum()
    # unnormalized gini: W * (1 - sum p^2) = W - sum(v^2)/W
    assert models._node_gini(value, w) == pytest.approx(w * (1 - (2 / 7) ** 2 - (5 / 7) ** 2))


def test_tree_serialization_round_trip(rng):
    X = rng.normal(size=(200, 6))
    y = (X[:, 0] * X[:, 1] > 0).astype(np.int64)
    tree = DecisionTree.fit(X, y, min_leaf=5)
    obj = tree.to_dict()
    clone = DecisionTree.from_dict(obj)
    assert clone.to_dict() == obj
    probe = rng.normal(size=(50, 6))
    assert (clone.predict(probe) == tree.predict(probe)).all()
    assert (clone.apply(probe) == tree.apply(probe)).all()


def test_tree_deterministic(rng):
    X = rng.normal(size=(150, 4))
    y = (X[:, 2] > 0.2).astype(np.int64)
    a = DecisionTree.fit(X, y, min_leaf=8)
    b = DecisionTree.fit(X, y, min_leaf=8)
    assert a.to_dict() == b.to_dict()


# ---------------------------------------------------------------------------
# random forest
# ---------------------------------------------------------------------------

def test_forest_is_majority_vote_of_members(rng):
    X, y = blobs(rng)
    forest = RandomForest.fit(X, y, n_trees=7, min_leaf=5, seed=3)
    probe = rng.normal(2.0, 2.0, size=(40, 2))
    votes = np.zeros((len(probe), forest.n_classes), dtype=int)
    for tree in forest.trees:
        votes[np.arange(len(probe)), tree.predict(probe)] += 1
    assert (forest.predict(probe) == votes.argmax(axis=1)).all()


def test_forest_deterministic_per_seed(rng):
    X, y = blobs(rng, n_per=40)
    a = RandomForest.fit(X, y, n_trees=5, min_leaf=5, seed=9)
    b = RandomForest.fit(X, y, n_trees=5, min_leaf=5, seed=9)
    c = RandomForest.fit(X, y, n_trees=5, min_leaf=5, seed=10)
    assert a.to_dict() == b.to_dict()
    assert a.to_dict() != c.to_dict()


def test_forest_round_trip_and_accuracy(rng):
    X, y = blobs(rng)
    forest = RandomForest.fit(X, y, n_trees=15, min_leaf=5, seed=0)
    assert (forest.predict(X) == y).mean() > 0.95
    clone = RandomForest.from_dict(forest.to_dict())
    assert (clone.predict(X) == forest.predict(X)).all()
    assert len(clone.trees) == 15


def test_forest_max_features_subsampling(rng):
    X, y = blobs(rng, n_per=50)
    forest = RandomForest.fit(X, y, n_trees=3, min_leaf=5, max_features="sqrt", seed=1)
    # d=2 -> sqrt -> 1 feature per split; trees must still fit and predict
    assert forest.predict(X).shape == (len(X),)
    full = RandomForest.fit(X, y, n_trees=3, min_leaf=5, max_features=None, seed=1)
    assert (full.predict(X) == y).mean() > 0.9
