"""Cost-complexity pruning, per-leaf signature mining, and signature matching.

Pruning follows the standard minimal cost-complexity construction: repeatedly
collapse the internal node(s) with the smallest effective alpha
g(t) = (R(t) - R(T_t)) / (|leaves(T_t)| - 1) where R is the weighted-impurity
share of the root total. Signatures are maximal frequent feature itemsets
(binarized presence) mined per leaf of the pruned tree.
"""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

import numpy as np

from .models import DecisionTree

log = logging.getLogger("motifscope.signatures")

SUPPORT_THRESHOLD = 0.8


# ---------------------------------------------------------------------------
# cost-complexity pruning
# ---------------------------------------------------------------------------

class CcpEntry:
    """One point on the pruning path; the snapshot tree is rebuilt on demand."""

    __slots__ = ("alpha", "leaf_count", "pruned_ids", "_source")

    def __init__(self, alpha: float, leaf_count: int, pruned_ids: frozenset, source: DecisionTree):
        self.alpha = alpha
        self.leaf_count = leaf_count
        self.pruned_ids = pruned_ids
        self._source = source

    @property
    def tree(self) -> DecisionTree:
        return _tree_with_collapsed(self._source, self.pruned_ids)

    def __repr__(self) -> str:  # pragma: no cover - debug aid
        return f"CcpEntry(alpha={self.alpha:.6g}, leaves={self.leaf_count})"


@dataclass
class CcpPath:
    entries: list[CcpEntry] = field(default_factory=list)

    def __iter__(self):
        return iter(self.entries)

    def __len__(self) -> int:
        return len(self.entries)

    def alphas(self) -> list[float]:
        return [e.alpha for e in self.entries]


def _tree_with_collapsed(tree: DecisionTree, pruned_ids: frozenset) -> DecisionTree:
    obj = tree.to_dict()
    rows = [dict(row) for row in obj["nodes"]]
    for i in pruned_ids:
        rows[i]["feature"] = None
        rows[i]["threshold"] = None
        rows[i]["left"] = None
        rows[i]["right"] = None
    return DecisionTree.from_dict({**obj, "nodes": rows})


def ccp_path(tree: DecisionTree) -> CcpPath:
    """Weakest-link pruning path from the unpruned tree down to the root leaf.

    Ties (several nodes sharing the minimal g) collapse together; alphas on
    the returned path are strictly increasing and leaf counts strictly
    decreasing, starting from the alpha = 0 unpruned entry.
    """
    nodes = tree.nodes()  # preorder, same indexing as to_dict()
    n = len(nodes)
    index = {id(nd): i for i, nd in enumerate(nodes)}
    left = np.full(n, -1, dtype=np.int64)
    right = np.full(n, -1, dtype=np.int64)
    for i, nd in enumerate(nodes):
        if not nd.is_leaf:
            left[i] = index[id(nd.left)]
            right[i] = index[id(nd.right)]
    R = np.array([nd.gini / tree.total_weight if tree.total_weight > 0 else 0.0 for nd in nodes])
    parent = np.full(n, -1, dtype=np.int64)
    for i in range(n):
        if left[i] != -1:
            parent[left[i]] = i
            parent[right[i]] = i

    pruned: set[int] = set()
    path = CcpPath([CcpEntry(0.0, tree.n_leaves, frozenset(), tree)])
    if tree.root.is_leaf:
        return path
    while True:
        hidden = np.zeros(n, dtype=bool)
        for i in range(n):  # preorder: parents precede children
            if left[i] == -1:
                continue
            if hidden[i] or i in pruned:
                hidden[left[i]] = True
                hidden[right[i]] = True
        leaves_cnt = np.zeros(n, dtype=np.int64)
        R_sub = np.zeros(n)
        g = np.full(n, np.inf)
        for i in range(n - 1, -1, -1):  # reverse preorder = children first
            if hidden[i]:
                continue
            if left[i] == -1 or i in pruned:
                leaves_cnt[i] = 1
                R_sub[i] = R[i]
                continue
            leaves_cnt[i] = leaves_cnt[left[i]] + leaves_cnt[right[i]]
            R_sub[i] = R_sub[left[i]] + R_sub[right[i]]
            g[i] = (R[i] - R_sub[i]) / (leaves_cnt[i] - 1)
        if leaves_cnt[0] == 1:
            break
        g_min = g.min()
        cut_set = {int(i) for i in np.flatnonzero(g <= g_min + 1e-15 * (1.0 + abs(g_min)))}
        pruned.update(cut_set)
        # leaf count after the collapse: only topmost cut nodes remove leaves
        removed = 0
        for i in cut_set:
            j = int(parent[i])
            while j != -1 and j not in cut_set:
                j = int(parent[j])
            if j == -1 and not hidden[i]:
                removed += leaves_cnt[i] - 1
        new_count = int(leaves_cnt[0] - removed)
        last = path.entries[-1]
        if g_min <= last.alpha + 1e-15 * (1.0 + abs(last.alpha)):
            # same alpha (floating ties): extend the previous snapshot
            path.entries[-1] = CcpEntry(last.alpha, new_count, frozenset(pruned), tree)
        else:
            path.entries.append(CcpEntry(float(g_min), new_count, frozenset(pruned), tree))
        if new_count == 1:
            break
    return path


def select_pruned(
    path: CcpPath,
    target_leaves: Optional[int] = None,
    alpha: Optional[float] = None,
) -> tuple[DecisionTree, CcpEntry]:
    """Pick a snapshot by leaf-count budget or by alpha.

    Leaf-count selection takes the smallest-alpha entry with leaf_count <=
    target; alpha selection takes the largest path alpha <= the given value.
    An unreachable exact target selects the nearest achievable level with a
    warning.
    """
    if (target_leaves is None) == (alpha is None):
        raise ValueError("specify exactly one of target_leaves or alpha")
    if not path.entries:
        raise ValueError("empty pruning path")
    if target_leaves is not None:
        if target_leaves < 1:
            raise ValueError("target_leaves must be >= 1")
        chosen = None
        for entry in path.entries:  # ascending alpha
            if entry.leaf_count <= target_leaves:
                chosen = entry
                break
        if chosen is None:  # pragma: no cover - last entry always has 1 leaf
            chosen = path.entries[-1]
        if chosen.leaf_count != target_leaves:
            warnings.warn(
                f"no pruning level with exactly {target_leaves} leaves; "
                f"selected {chosen.leaf_count} leaves (alpha={chosen.alpha:.6g})"
            )
    else:
        if alpha < 0:
            raise ValueError("alpha must be nonnegative")
        chosen = path.entries[0]
        for entry in path.entries[1:]:
            if entry.alpha <= alpha:
                chosen = entry
    return chosen.tree, chosen


# ---------------------------------------------------------------------------
# per-leaf signature mining
# ---------------------------------------------------------------------------

@dataclass
class LeafSignature:
    leaf_id: int
    group: str
    probability: float
    samples: int
    items: list[str]
    item_supports: dict[str, float]
    support: float

    def to_json(self) -> dict:
        return {
            "leaf": self.leaf_id,
            "group": self.group,
            "probability": round(self.probability, 6),
            "samples": self.samples,
            "items": self.items,
            "item_supports": {k: round(v, 6) for k, v in self.item_supports.items()},
            "support": round(self.support, 6),
        }


def greedy_itemset(
    presence: np.ndarray,
    keys: Sequence[str],
    threshold: float = SUPPORT_THRESHOLD,
) -> tuple[list[int], float]:
    """Grow an itemset greedily in descending single-item support.

    An item is added only while the joint support stays strictly above the
    threshold. Because support is monotone non-increasing under growth, a
    single pass already yields a maximal set; a verification sweep re-checks
    every rejected candidate anyway.
    """
    n = presence.shape[0]
    singles = presence.sum(axis=0) / n
    candidates = [j for j in range(presence.shape[1]) if singles[j] > threshold]
    candidates.sort(key=lambda j: (-singles[j], keys[j]))
    mask = np.ones(n, dtype=bool)
    chosen: list[int] = []
    for j in candidates:
        grown = mask & presence[:, j]
        if grown.sum() / n > threshold:
            chosen.append(j)
            mask = grown
    for j in candidates:  # maximality sweep (no-op by monotonicity)
        if j in chosen:
            continue
        grown = mask & presence[:, j]
        if grown.sum() / n > threshold:  # pragma: no cover - impossible
            chosen.append(j)
            mask = grown
    support = mask.sum() / n if chosen else 0.0
    return chosen, float(support)


def exhaustive_maximal_itemsets(
    presence: np.ndarray,
    threshold: float = SUPPORT_THRESHOLD,
    max_items: int = 15,
) -> list[tuple[frozenset[int], float]]:
    """All maximal frequent itemsets by bitmask enumeration.

    The universe is restricted to items whose single support exceeds the
    threshold — any other item is provably absent from every frequent set by
    support monotonicity. Only usable when that universe has <= max_items
    members.
    """
    n = presence.shape[0]
    singles = presence.sum(axis=0) / n
    universe = [j for j in range(presence.shape[1]) if singles[j] > threshold]
    if len(universe) > max_items:
        raise ValueError(f"{len(universe)} candidate items exceed the exhaustive limit {max_items}")
    u = len(universe)
    if u == 0:
        return []
    # encode each row as a bitmask over the candidate universe
    bits = np.zeros(n, dtype=np.int64)
    for pos, j in enumerate(universe):
        bits |= presence[:, j].astype(np.int64) << pos
    patterns, counts = np.unique(bits, return_counts=True)
    frequent: dict[int, float] = {}
    for s in range(1, 1 << u):
        sup = counts[(patterns & s) == s].sum() / n
        if sup > threshold:
            frequent[s] = float(sup)
    maximal = []
    for s, sup in frequent.items():
        if any(t != s and (t & s) == s for t in frequent):
            continue
        items = frozenset(universe[pos] for pos in range(u) if s >> pos & 1)
        maximal.append((items, sup))
    return maximal


def mine_leaf_itemset(
    presence: np.ndarray,
    keys: Sequence[str],
    threshold: float = SUPPORT_THRESHOLD,
    method: str = "greedy",
    verify_limit: int = 15,
) -> tuple[list[int], float, list[str]]:
    """Mine one leaf; returns (column indices, joint support, discrepancy log).

    With the default greedy method, leaves whose candidate universe fits the
    exhaustive limit are cross-checked; a greedy set shorter than the longest
    exhaustive maximal itemset is reported (not silently accepted).
    """
    discrepancies: list[str] = []
    chosen, support = greedy_itemset(presence, keys, threshold)
    n_candidates = int((presence.sum(axis=0) / presence.shape[0] > threshold).sum())
    if method == "exhaustive" or (method == "greedy" and n_candidates <= verify_limit):
        maximal = exhaustive_maximal_itemsets(presence, threshold, max_items=verify_limit) if n_candidates <= verify_limit else []
        if maximal:
            best_len = max(len(m) for m, _ in maximal)
            if method == "exhaustive":
                # longest; ties by higher support then lexicographic key order
                best = sorted(
                    (m for m in maximal if len(m[0]) == best_len),
                    key=lambda m: (-m[1], sorted(keys[j] for j in m[0])),
                )[0]
                chosen, support = sorted(best[0]), best[1]
            elif len(chosen) < best_len:
                msg = (
                    f"greedy itemset of length {len(chosen)} shorter than exhaustive maximum {best_len}"
                )
                log.warning(msg)
                discrepancies.append(msg)
        elif method == "exhaustive":
            chosen, support = [], 0.0
    return list(chosen), support, discrepancies


def mine_signatures(
    tree: DecisionTree,
    X: np.ndarray,
    vocabulary: Sequence[str],
    classes: Sequence[str],
    threshold: float = SUPPORT_THRESHOLD,
    method: str = "greedy",
) -> tuple[list[LeafSignature], list[str]]:
    """Mine a signature for every leaf of the (pruned) tree over its own rows."""
    if method not in ("greedy", "exhaustive"):
        raise ValueError(f"unknown mining method {method!r}")
    leaf_of_row = tree.apply(X)
    signatures = []
    all_discrepancies: list[str] = []
    for leaf in tree.leaves():
        rows = np.flatnonzero(leaf_of_row == leaf.leaf_id)
        if rows.size == 0:
            continue
        presence = X[rows] > 0
        singles = presence.sum(axis=0) / rows.size
        cols, support, notes = mine_leaf_itemset(presence, vocabulary, threshold, method)
        for note in notes:
            all_discrepancies.append(f"leaf {leaf.leaf_id}: {note}")
        items = sorted(vocabulary[j] for j in cols)
        prob = float(leaf.value[leaf.prediction] / leaf.weight) if leaf.weight > 0 else 0.0
        signatures.append(
            LeafSignature(
                leaf_id=int(leaf.leaf_id),
                group=classes[leaf.prediction],
                probability=prob,
                samples=int(rows.size),
                items=items,
                item_supports={vocabulary[j]: float(singles[j]) for j in cols},
                support=support,
            )
        )
    return signatures, all_discrepancies


# ---------------------------------------------------------------------------
# matching
# ---------------------------------------------------------------------------

@dataclass
class SignatureMatch:
    tx_hash: str
    ego: str
    leaves: list[int]
    groups: list[str]

    def to_json(self) -> dict:
        return {"tx_hash": self.tx_hash, "ego": self.ego, "leaves": self.leaves, "groups": self.groups}


def match_signatures(features: dict[str, float], signatures: Iterable[LeafSignature]) -> tuple[list[int], list[str]]:
    """Leaves whose full itemset is present; empty signatures never match."""
    present = {key for key, count in features.items() if count > 0}
    leaves = []
    groups = []
    for sig in signatures:
        if sig.items and all(item in present for item in sig.items):
            leaves.append(sig.leaf_id)
            groups.append(sig.group)
    order = np.argsort(leaves)
    leaves = [leaves[i] for i in order]
    groups = [groups[i] for i in order]
    seen = set()
    unique_groups = [g for g in groups if not (g in seen or seen.add(g))]
    return leaves, sorted(unique_groups)


# ---------------------------------------------------------------------------
# DOT export
# ---------------------------------------------------------------------------

def tree_to_dot(tree: DecisionTree, vocabulary: Sequence[str], classes: Sequence[str]) -> str:
    lines = ["digraph pruned_tree {", "  node [fontname=\"Helvetica\"];"]
    nodes = tree.nodes()
    index = {id(nd): i for i, nd in enumerate(nodes)}
    for i, nd in enumerate(nodes):
        if nd.is_leaf:
            prob = nd.value[nd.prediction] / nd.weight if nd.weight > 0 else 0.0
            label = f"leaf {nd.leaf_id}\\n{classes[nd.prediction]}\\nn={nd.n_samples} p={prob:.2f}"
            lines.append(f'  n{i} [shape=box, style=rounded, label="{label}"];')
        else:
            key = vocabulary[nd.feature] if nd.feature < len(vocabulary) else f"f{nd.feature}"
            key = key.replace('"', '\\"')
            lines.append(f'  n{i} [shape=ellipse, label="{key}\\n<= {nd.threshold:g}"];')
    for i, nd in enumerate(nodes):
        if not nd.is_leaf:
            lines.append(f'  n{i} -> n{index[id(nd.left)]} [label="yes"];')
            lines.append(f'  n{i} -> n{index[id(nd.right)]} [label="no"];')
    lines.append("}")
    return "\n".join(lines) + "\n"
