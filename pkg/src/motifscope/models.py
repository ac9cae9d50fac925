"""Classifiers: one-vs-rest logistic regression, decision tree, random forest.

The tree is grown with weighted Gini impurity so the cost-complexity pruning
and per-leaf signature mining in signatures.py can reuse its internal node
statistics. Feature values are rank-encoded once per fit; every node split
then reduces to bincounts over the rank codes, which keeps training linear in
node size instead of paying a sort per node.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy.optimize import minimize
from scipy.special import expit


# ---------------------------------------------------------------------------
# logistic regression (one-vs-rest)
# ---------------------------------------------------------------------------

def logistic_loss_grad(
    params: np.ndarray,
    X: np.ndarray,
    t: np.ndarray,
    sample_weight: np.ndarray,
    l2: float,
) -> tuple[float, np.ndarray]:
    """Weighted binary cross-entropy (normalized by total weight) + L2 on w.

    params = [w_1..w_d, b]; the bias is not penalized. Normalizing the data
    term by the weight total keeps the optimum invariant to rescaling all
    sample weights by a constant.
    """
    w, b = params[:-1], params[-1]
    z = X @ w + b
    total = sample_weight.sum()
    # log(1 + e^z) - t*z, computed stably
    data = np.logaddexp(0.0, z) - t * z
    loss = float((sample_weight * data).sum() / total + 0.5 * l2 * (w @ w))
    resid = sample_weight * (expit(z) - t) / total
    grad = np.empty_like(params)
    grad[:-1] = X.T @ resid + l2 * w
    grad[-1] = resid.sum()
    return loss, grad


@dataclass
class LogisticModel:
    """One-vs-rest logistic regression trained with L-BFGS-B."""

    weights: np.ndarray  # (K, d)
    biases: np.ndarray  # (K,)
    l2: float = 1.0

    @classmethod
    def fit(
        cls,
        X: np.ndarray,
        y: np.ndarray,
        sample_weight: Optional[np.ndarray] = None,
        n_classes: Optional[int] = None,
        l2: float = 1.0,
        max_iter: int = 500,
    ) -> "LogisticModel":
        n, d = X.shape
        K = int(n_classes if n_classes is not None else y.max() + 1)
        if sample_weight is None:
            sample_weight = np.ones(n)
        weights = np.zeros((K, d))
        biases = np.zeros(K)
        for k in range(K):
            t = (y == k).astype(float)
            res = minimize(
                logistic_loss_grad,
                np.zeros(d + 1),
                args=(X, t, sample_weight, l2),
                method="L-BFGS-B",
                jac=True,
                options={"maxiter": max_iter},
            )
            if not res.success:
                warnings.warn(
                    f"logistic fit for class {k} stopped early: {res.message}",
                    RuntimeWarning,
                )
            weights[k] = res.x[:-1]
            biases[k] = res.x[-1]
        return cls(weights=weights, biases=biases, l2=l2)

    def decision_function(self, X: np.ndarray) -> np.ndarray:
        return X @ self.weights.T + self.biases

    def predict(self, X: np.ndarray) -> np.ndarray:
        return np.argmax(self.decision_function(X), axis=1)

    def to_dict(self) -> dict:
        return {
            "kind": "logistic",
            "l2": self.l2,
            "weights": self.weights.tolist(),
            "biases": self.biases.tolist(),
        }

    @classmethod
    def from_dict(cls, obj: dict) -> "LogisticModel":
        return cls(
            weights=np.asarray(obj["weights"], dtype=float),
            biases=np.asarray(obj["biases"], dtype=float),
            l2=float(obj.get("l2", 1.0)),
        )


# ---------------------------------------------------------------------------
# decision tree
# ---------------------------------------------------------------------------

class TreeNode:
    __slots__ = ("feature", "threshold", "left", "right", "value", "n_samples", "weight", "gini", "leaf_id")

    def __init__(self, value: np.ndarray, n_samples: int, weight: float, gini: float):
        self.feature: Optional[int] = None
        self.threshold: float = 0.0
        self.left: Optional["TreeNode"] = None
        self.right: Optional["TreeNode"] = None
        self.value = value  # per-class weight sums
        self.n_samples = n_samples  # raw count
        self.weight = weight
        self.gini = gini  # unnormalized: W * (1 - sum p^2)
        self.leaf_id: Optional[int] = None

    @property
    def is_leaf(self) -> bool:
        return self.feature is None

    @property
    def prediction(self) -> int:
        # argmax returns the first maximum, i.e. the lowest class index on ties
        return int(np.argmax(self.value))


def _node_gini(value: np.ndarray, weight: float) -> float:
    if weight <= 0:
        return 0.0
    return float(weight - (value @ value) / weight)


@dataclass
class DecisionTree:
    root: TreeNode
    n_classes: int
    min_leaf: int = 10
    total_weight: float = 0.0
    n_leaves: int = 0

    @classmethod
    def fit(
        cls,
        X: np.ndarray,
        y: np.ndarray,
        sample_weight: Optional[np.ndarray] = None,
        n_classes: Optional[int] = None,
        min_leaf: int = 10,
        max_features: Optional[int] = None,
        rng: Optional[np.random.Generator] = None,
    ) -> "DecisionTree":
        n, d = X.shape
        K = int(n_classes if n_classes is not None else y.max() + 1)
        if sample_weight is None:
            sample_weight = np.ones(n)
        y = np.asarray(y, dtype=np.int64)
        # rank-encode each column once; node splits become bincounts over codes
        codes = np.empty((n, d), dtype=np.int32)
        uniques: list[np.ndarray] = []
        for f in range(d):
            uniq, inv = np.unique(X[:, f], return_inverse=True)
            uniques.append(uniq)
            codes[:, f] = inv
        total_weight = float(sample_weight.sum())

        def make_node(idx: np.ndarray) -> TreeNode:
            value = np.bincount(y[idx], weights=sample_weight[idx], minlength=K)
            weight = float(value.sum())
            return TreeNode(value, len(idx), weight, _node_gini(value, weight))

        root = make_node(np.arange(n))
        stack = [(root, np.arange(n))]
        while stack:
            node, idx = stack.pop()
            if len(idx) < 2 * min_leaf or node.gini <= 0.0:
                continue
            split = _best_split(
                codes, uniques, y, sample_weight, idx, node, K, min_leaf, max_features, rng
            )
            if split is None:
                continue
            feature, threshold, left_mask = split
            node.feature = feature
            node.threshold = threshold
            left = make_node(idx[left_mask])
            right = make_node(idx[~left_mask])
            node.left, node.right = left, right
            # push right first so the left child is processed next (preorder)
            stack.append((right, idx[~left_mask]))
            stack.append((left, idx[left_mask]))
        tree = cls(root=root, n_classes=K, min_leaf=min_leaf, total_weight=total_weight)
        tree.renumber_leaves()
        tree._check_min_leaf()
        return tree

    # -- structure ----------------------------------------------------------

    def nodes(self) -> list[TreeNode]:
        """Preorder node list."""
        out, stack = [], [self.root]
        while stack:
            node = stack.pop()
            out.append(node)
            if not node.is_leaf:
                stack.append(node.right)
                stack.append(node.left)
        return out

    def leaves(self) -> list[TreeNode]:
        return [node for node in self.nodes() if node.is_leaf]

    def renumber_leaves(self) -> None:
        count = 0
        for node in self.nodes():
            if node.is_leaf:
                node.leaf_id = count
                count += 1
            else:
                node.leaf_id = None
        self.n_leaves = count

    def _check_min_leaf(self) -> None:
        for leaf in self.leaves():
            if leaf is not self.root and leaf.n_samples < self.min_leaf:
                raise AssertionError(
                    f"leaf with {leaf.n_samples} samples violates min_leaf={self.min_leaf}"
                )

    # -- inference ----------------------------------------------------------

    def _route(self, X: np.ndarray) -> list[tuple[TreeNode, np.ndarray]]:
        X = np.asarray(X, dtype=float)
        pairs = []
        stack = [(self.root, np.arange(X.shape[0]))]
        while stack:
            node, idx = stack.pop()
            if node.is_leaf:
                pairs.append((node, idx))
                continue
            mask = X[idx, node.feature] <= node.threshold
            stack.append((node.right, idx[~mask]))
            stack.append((node.left, idx[mask]))
        return pairs

    def predict(self, X: np.ndarray) -> np.ndarray:
        out = np.empty(X.shape[0], dtype=np.int64)
        for leaf, idx in self._route(X):
            out[idx] = leaf.prediction
        return out

    def apply(self, X: np.ndarray) -> np.ndarray:
        """Leaf id (preorder numbering) reached by each row."""
        out = np.empty(X.shape[0], dtype=np.int64)
        for leaf, idx in self._route(X):
            out[idx] = leaf.leaf_id
        return out

    def decision_path(self, x: np.ndarray) -> list[tuple[TreeNode, bool]]:
        """(node, went_left) pairs from root to the leaf for a single row."""
        path = []
        node = self.root
        while not node.is_leaf:
            left = bool(x[node.feature] <= node.threshold)
            path.append((node, left))
            node = node.left if left else node.right
        return path

    # -- serialization ------------------------------------------------------

    def to_dict(self) -> dict:
        nodes = self.nodes()
        index = {id(node): i for i, node in enumerate(nodes)}
        rows = []
        for node in nodes:
            rows.append(
                {
                    "feature": node.feature,
                    "threshold": node.threshold if not node.is_leaf else None,
                    "left": index[id(node.left)] if node.left else None,
                    "right": index[id(node.right)] if node.right else None,
                    "value": [float(v) for v in node.value],
                    "n": node.n_samples,
                    "weight": node.weight,
                    "gini": node.gini,
                }
            )
        return {
            "kind": "tree",
            "n_classes": self.n_classes,
            "min_leaf": self.min_leaf,
            "total_weight": self.total_weight,
            "nodes": rows,
        }

    @classmethod
    def from_dict(cls, obj: dict) -> "DecisionTree":
        rows = obj["nodes"]
        nodes = [
            TreeNode(np.asarray(r["value"], dtype=float), int(r["n"]), float(r["weight"]), float(r["gini"]))
            for r in rows
        ]
        for node, r in zip(nodes, rows):
            if r["feature"] is not None:
                node.feature = int(r["feature"])
                node.threshold = float(r["threshold"])
                node.left = nodes[r["left"]]
                node.right = nodes[r["right"]]
        tree = cls(
            root=nodes[0],
            n_classes=int(obj["n_classes"]),
            min_leaf=int(obj["min_leaf"]),
            total_weight=float(obj["total_weight"]),
        )
        tree.renumber_leaves()
        return tree


def _best_split(
    codes: np.ndarray,
    uniques: list[np.ndarray],
    y: np.ndarray,
    sample_weight: np.ndarray,
    idx: np.ndarray,
    node: TreeNode,
    K: int,
    min_leaf: int,
    max_features: Optional[int],
    rng: Optional[np.random.Generator],
) -> Optional[tuple[int, float, np.ndarray]]:
    d = codes.shape[1]
    if max_features is not None and max_features < d:
        if rng is None:
            raise ValueError("max_features requires an rng")
        features = np.sort(rng.choice(d, size=max_features, replace=False))
    else:
        features = np.arange(d)
    y_node = y[idx]
    sw_node = sample_weight[idx]
    n_node = len(idx)
    eps = 1e-12 * max(1.0, node.weight)
    best_dec = eps
    best: Optional[tuple[int, float, np.ndarray, int]] = None
    for f in features:
        codes_f = codes[idx, f]
        uf = len(uniques[f])
        cnt = np.bincount(codes_f, minlength=uf)
        present = np.flatnonzero(cnt)
        if present.size < 2:
            continue
        mat = np.bincount(codes_f * K + y_node, weights=sw_node, minlength=uf * K).reshape(uf, K)
        cw = np.cumsum(mat, axis=0)
        cn = np.cumsum(cnt)
        pos = present[:-1]  # boundary after each present value except the last
        left_n = cn[pos]
        right_n = n_node - left_n
        valid = (left_n >= min_leaf) & (right_n >= min_leaf)
        if not valid.any():
            continue
        left_vals = cw[pos]
        left_w = left_vals.sum(axis=1)
        right_vals = node.value - left_vals
        right_w = node.weight - left_w
        with np.errstate(divide="ignore", invalid="ignore"):
            left_g = np.where(left_w > 0, left_w - (left_vals**2).sum(axis=1) / left_w, 0.0)
            right_g = np.where(right_w > 0, right_w - (right_vals**2).sum(axis=1) / right_w, 0.0)
        dec = node.gini - left_g - right_g
        dec[~valid] = -np.inf
        j = int(np.argmax(dec))
        if dec[j] > best_dec:
            best_dec = dec[j]
            best = (int(f), j, codes_f, pos[j])
    if best is None:
        return None
    f, j, codes_f, boundary = best
    present = np.flatnonzero(np.bincount(codes_f, minlength=len(uniques[f])))
    nxt = present[np.searchsorted(present, boundary) + 1]
    threshold = float((uniques[f][boundary] + uniques[f][nxt]) / 2.0)
    return f, threshold, codes_f <= boundary


# ---------------------------------------------------------------------------
# random forest
# ---------------------------------------------------------------------------

@dataclass
class RandomForest:
    trees: list[DecisionTree] = field(default_factory=list)
    n_classes: int = 0

    @classmethod
    def fit(
        cls,
        X: np.ndarray,
        y: np.ndarray,
        sample_weight: Optional[np.ndarray] = None,
        n_classes: Optional[int] = None,
        n_trees: int = 100,
        min_leaf: int = 10,
        max_features: Optional[str] = "sqrt",
        seed: int = 0,
    ) -> "RandomForest":
        n, d = X.shape
        K = int(n_classes if n_classes is not None else y.max() + 1)
        if sample_weight is None:
            sample_weight = np.ones(n)
        if max_features == "sqrt":
            m: Optional[int] = max(1, int(np.sqrt(d)))
        elif max_features is None:
            m = None
        else:
            m = int(max_features)
        seeds = np.random.SeedSequence(seed).spawn(n_trees)
        trees = []
        for child in seeds:
            rng = np.random.default_rng(child)
            boot = rng.integers(0, n, size=n)
            trees.append(
                DecisionTree.fit(
                    X[boot],
                    y[boot],
                    sample_weight=sample_weight[boot],
                    n_classes=K,
                    min_leaf=min_leaf,
                    max_features=m,
                    rng=rng,
                )
            )
        return cls(trees=trees, n_classes=K)

    def predict(self, X: np.ndarray) -> np.ndarray:
        votes = np.zeros((X.shape[0], self.n_classes), dtype=np.int64)
        rows = np.arange(X.shape[0])
        for tree in self.trees:
            votes[rows, tree.predict(X)] += 1
        # argmax breaks ties toward the lowest class index (global class order)
        return np.argmax(votes, axis=1)

    def to_dict(self) -> dict:
        return {
            "kind": "forest",
            "n_classes": self.n_classes,
            "trees": [tree.to_dict() for tree in self.trees],
        }

    @classmethod
    def from_dict(cls, obj: dict) -> "RandomForest":
        return cls(
            trees=[DecisionTree.from_dict(t) for t in obj["trees"]],
            n_classes=int(obj["n_classes"]),
        )
