"""Account signature-usage profiles and hierarchical clustering.

Profiles count matched transactions per (account, leaf signature), normalize
rows to proportions, then z-score columns across accounts. Clustering runs
scipy's agglomerative linkage over the z-scored rows with Euclidean distance;
the number of clusters is chosen by maximizing the silhouette over flat cuts.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

import numpy as np
from scipy.cluster.hierarchy import fcluster, leaves_list, linkage
from scipy.spatial.distance import pdist, squareform

LINKAGES = ("ward", "complete", "average")
DEFAULT_MIN_MATCHES = 10
K_CAP = 15


@dataclass
class Profiles:
    accounts: list[str]
    leaf_ids: list[int]
    raw: np.ndarray  # (n_accounts, n_leaves) match counts

    @property
    def totals(self) -> np.ndarray:
        return self.raw.sum(axis=1)

    @property
    def normalized(self) -> np.ndarray:
        totals = self.totals.astype(float)
        out = np.zeros_like(self.raw, dtype=float)
        nz = totals > 0
        out[nz] = self.raw[nz] / totals[nz, None]
        return out

    @property
    def zscored(self) -> np.ndarray:
        return zscore_columns(self.normalized)


def zscore_columns(M: np.ndarray) -> np.ndarray:
    """Column z-scores with sample sd (ddof=1); constant columns become 0."""
    M = np.asarray(M, dtype=float)
    mean = M.mean(axis=0)
    if M.shape[0] > 1:
        sd = M.std(axis=0, ddof=1)
    else:
        sd = np.zeros(M.shape[1])
    out = np.zeros_like(M)
    nz = sd > 0
    out[:, nz] = (M[:, nz] - mean[nz]) / sd[nz]
    return out


def build_profiles(
    matches: Iterable[tuple[str, Sequence[int]]],
    accounts: Optional[Sequence[str]] = None,
) -> Profiles:
    """Aggregate (account, matched leaf ids) events into count profiles.

    A transaction matching several signatures counts once per matched leaf.
    Accounts passed explicitly but absent from the stream (zero matches) are
    excluded with a warning.
    """
    counts: dict[str, dict[int, int]] = {}
    for account, leaf_ids in matches:
        if not leaf_ids:
            continue
        row = counts.setdefault(account, {})
        for leaf in leaf_ids:
            row[leaf] = row.get(leaf, 0) + 1
    if accounts is not None:
        missing = sorted(set(accounts) - set(counts))
        if missing:
            warnings.warn(
                f"excluded {len(missing)} account(s) with zero signature matches: "
                + ", ".join(missing[:5])
                + ("..." if len(missing) > 5 else "")
            )
    names = sorted(counts)
    leaf_ids = sorted({leaf for row in counts.values() for leaf in row})
    col = {leaf: j for j, leaf in enumerate(leaf_ids)}
    raw = np.zeros((len(names), len(leaf_ids)), dtype=np.int64)
    for i, name in enumerate(names):
        for leaf, c in counts[name].items():
            raw[i, col[leaf]] = c
    return Profiles(accounts=names, leaf_ids=leaf_ids, raw=raw)


def filter_min_matches(profiles: Profiles, min_matches: int = DEFAULT_MIN_MATCHES) -> Profiles:
    keep = np.flatnonzero(profiles.totals >= min_matches)
    dropped = len(profiles.accounts) - keep.size
    if dropped:
        warnings.warn(
            f"excluded {dropped} account(s) with fewer than {min_matches} matched transactions"
        )
    return Profiles(
        accounts=[profiles.accounts[i] for i in keep],
        leaf_ids=list(profiles.leaf_ids),
        raw=profiles.raw[keep],
    )


# ---------------------------------------------------------------------------
# silhouette + clustering
# ---------------------------------------------------------------------------

def pairwise_distances(X: np.ndarray) -> np.ndarray:
    # pdist computes sqrt(sum((a-b)^2)) on the differences directly; the
    # gram-matrix shortcut loses ~1e-8 to cancellation on close points.
    X = np.asarray(X, dtype=float)
    if X.shape[0] < 2:
        return np.zeros((X.shape[0], X.shape[0]))
    return squareform(pdist(X))


def silhouette_score(X: np.ndarray, labels: np.ndarray) -> float:
    """Mean silhouette over points; singleton-cluster points score 0."""
    labels = np.asarray(labels)
    uniq = np.unique(labels)
    if uniq.size < 2 or uniq.size > len(labels) - 1:
        raise ValueError("silhouette needs 2 <= k <= n-1 clusters")
    D = pairwise_distances(np.asarray(X, dtype=float))
    n = len(labels)
    masks = [labels == c for c in uniq]
    sizes = np.array([m.sum() for m in masks])
    # mean distance from every point to each cluster
    sums = np.stack([D[:, m].sum(axis=1) for m in masks], axis=1)  # (n, k)
    own = np.searchsorted(uniq, labels)
    s = np.zeros(n)
    for i in range(n):
        size_own = sizes[own[i]]
        if size_own <= 1:
            continue  # singleton: s = 0 by convention
        a = sums[i, own[i]] / (size_own - 1)
        other = [sums[i, c] / sizes[c] for c in range(uniq.size) if c != own[i]]
        b = min(other)
        denom = max(a, b)
        s[i] = 0.0 if denom == 0 else (b - a) / denom
    return float(s.mean())


@dataclass
class ClusteringResult:
    linkage_matrix: np.ndarray
    assignments: dict[int, np.ndarray]  # k -> labels
    silhouettes: dict[int, float]
    chosen_k: int
    notes: list[str] = field(default_factory=list)

    def chosen_labels(self) -> np.ndarray:
        return self.assignments[self.chosen_k]

    def to_json(self, accounts: Sequence[str]) -> dict:
        return {
            "chosen_k": self.chosen_k,
            "silhouettes": {str(k): round(v, 6) for k, v in sorted(self.silhouettes.items())},
            "assignments": {
                account: int(label) for account, label in zip(accounts, self.chosen_labels())
            },
            "merges": np.round(self.linkage_matrix, 9).tolist(),
            "notes": self.notes,
        }


def hcluster(Z_rows: np.ndarray, method: str = "ward") -> ClusteringResult:
    """Agglomerative clustering over z-scored rows; k chosen by silhouette.

    Flat cuts are evaluated for k in [2, min(15, n-1)]; silhouette ties break
    toward the smaller k. Degenerate inputs (n < 3 or all-identical rows) fall
    back to a single k = 2 cut with a note.
    """
    if method not in LINKAGES:
        raise ValueError(f"linkage must be one of {LINKAGES}")
    X = np.asarray(Z_rows, dtype=float)
    n = X.shape[0]
    if n < 2:
        raise ValueError("clustering needs at least 2 profiles")
    notes: list[str] = []
    Zm = linkage(X, method=method)
    if n < 3:
        notes.append("fewer than 3 accounts: silhouette undefined, reporting the single k=2 cut")
        warnings.warn(notes[-1])
        labels = fcluster(Zm, t=2, criterion="maxclust")
        return ClusteringResult(Zm, {2: labels}, {}, 2, notes)
    if np.allclose(pairwise_distances(X), 0.0):
        notes.append("all profiles identical: silhouette set to 0, reporting k=2")
        warnings.warn(notes[-1])
        labels = fcluster(Zm, t=2, criterion="maxclust")
        return ClusteringResult(Zm, {2: labels}, {2: 0.0}, 2, notes)
    assignments: dict[int, np.ndarray] = {}
    silhouettes: dict[int, float] = {}
    for k in range(2, min(K_CAP, n - 1) + 1):
        labels = fcluster(Zm, t=k, criterion="maxclust")
        if np.unique(labels).size < 2:
            continue  # cut collapsed (duplicate heights); silhouette undefined
        assignments[k] = labels
        silhouettes[k] = silhouette_score(X, labels)
    chosen = max(sorted(silhouettes), key=lambda k: silhouettes[k])
    return ClusteringResult(Zm, assignments, silhouettes, chosen, notes)


def canonical_labels(labels: Sequence[int]) -> np.ndarray:
    """Relabel clusters by first appearance, for permutation-invariant tests."""
    mapping: dict[int, int] = {}
    out = np.empty(len(labels), dtype=np.int64)
    for i, lab in enumerate(labels):
        if lab not in mapping:
            mapping[lab] = len(mapping)
        out[i] = mapping[lab]
    return out


# ---------------------------------------------------------------------------
# plot-data export
# ---------------------------------------------------------------------------

def emit_clustermap_data(result: ClusteringResult, profiles: Profiles) -> dict:
    """Row/column dendrogram orders, z-matrix, and labels for external plotting."""
    Z = profiles.zscored
    row_order = [int(i) for i in leaves_list(result.linkage_matrix)]
    if Z.shape[1] > 1:
        col_link = linkage(Z.T, method="average")
        col_order = [int(j) for j in leaves_list(col_link)]
    else:
        col_order = list(range(Z.shape[1]))
    labels = result.chosen_labels()
    return {
        "row_order": [profiles.accounts[i] for i in row_order],
        "col_order": [int(profiles.leaf_ids[j]) for j in col_order],
        "zscores": [
            [round(float(Z[i, j]), 9) for j in col_order] for i in row_order
        ],
        "clusters": {profiles.accounts[i]: int(labels[i]) for i in range(len(profiles.accounts))},
        "chosen_k": result.chosen_k,
    }
