"""Dataset assembly, class weighting, stratified CV, and evaluation."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .motif import OOV_KEY


@dataclass
class Dataset:
    """Dense design matrix with a fixed, lexicographic feature vocabulary.

    The vocabulary is closed over the training corpus; the trailing OOV
    column absorbs feature keys unseen at training time so models can score
    transactions from outside the corpus.
    """

    X: np.ndarray
    y: np.ndarray
    classes: list[str]
    vocabulary: list[str]
    tx_hashes: list[str] = field(default_factory=list)
    egos: list[str] = field(default_factory=list)

    @property
    def n_rows(self) -> int:
        return self.X.shape[0]

    def class_counts(self) -> np.ndarray:
        return np.bincount(self.y, minlength=len(self.classes))


def build_vocabulary(feature_maps: Sequence[dict[str, int]]) -> list[str]:
    keys = set()
    for feats in feature_maps:
        keys.update(feats)
    keys.discard(OOV_KEY)
    return sorted(keys) + [OOV_KEY]


def vectorize(feature_maps: Sequence[dict[str, int]], vocabulary: list[str]) -> np.ndarray:
    """Dense matrix over the vocabulary; unknown keys sum into the OOV column."""
    index = {key: col for col, key in enumerate(vocabulary)}
    oov = index[OOV_KEY]
    X = np.zeros((len(feature_maps), len(vocabulary)))
    for row, feats in enumerate(feature_maps):
        for key, value in feats.items():
            X[row, index.get(key, oov)] += value
    return X


def build_dataset(
    rows: Sequence[tuple[str, str, dict[str, int], str]],
    classes: Optional[list[str]] = None,
    vocabulary: Optional[list[str]] = None,
) -> Dataset:
    """Assemble (tx_hash, ego, features, label) rows into a Dataset."""
    if not rows:
        raise ValueError("cannot build a dataset from zero labeled rows")
    labels = [label for _, _, _, label in rows]
    if classes is None:
        classes = sorted(set(labels))
    class_index = {c: i for i, c in enumerate(classes)}
    if vocabulary is None:
        vocabulary = build_vocabulary([feats for _, _, feats, _ in rows])
    X = vectorize([feats for _, _, feats, _ in rows], vocabulary)
    y = np.array([class_index[label] for label in labels], dtype=np.int64)
    return Dataset(
        X=X,
        y=y,
        classes=classes,
        vocabulary=vocabulary,
        tx_hashes=[r[0] for r in rows],
        egos=[r[1] for r in rows],
    )


def class_weights(y: np.ndarray, n_classes: int) -> np.ndarray:
    """Balanced weights w_c = N / (K * n_c); every class must be present."""
    counts = np.bincount(y, minlength=n_classes)
    if (counts == 0).any():
        missing = [i for i, c in enumerate(counts) if c == 0]
        raise ValueError(f"cannot weight empty classes (indices {missing})")
    return len(y) / (n_classes * counts.astype(float))


def sample_weights(y: np.ndarray, n_classes: int) -> np.ndarray:
    return class_weights(y, n_classes)[y]


def stratified_kfold(
    y: np.ndarray,
    k: int = 10,
    seed: int = 0,
    groups: Optional[Sequence[str]] = None,
) -> list[tuple[np.ndarray, np.ndarray]]:
    """Stratified k-fold index pairs (train, test).

    Per-fold class counts stay within one of n_c/k. When groups are given
    (tx hashes), rows of one group always land in the same fold, keeping
    duplicated transactions out of train/test splits of the same fold.
    """
    n = len(y)
    if groups is None:
        unit_rows = [np.array([i]) for i in range(n)]
        unit_labels = np.asarray(y)
    else:
        by_group: dict[str, list[int]] = {}
        for i, g in enumerate(groups):
            by_group.setdefault(g, []).append(i)
        unit_rows = [np.array(rows) for rows in by_group.values()]
        unit_labels = np.array([y[rows[0]] for rows in unit_rows])
    rng = np.random.default_rng(seed)
    fold_units: list[list[int]] = [[] for _ in range(k)]
    for ci in np.unique(unit_labels):
        members = np.flatnonzero(unit_labels == ci)
        if len(members) < k:
            raise ValueError(
                f"class index {ci} has only {len(members)} units but k={k} folds were requested"
            )
        members = members[rng.permutation(len(members))]
        sizes = [len(members) // k + (1 if f < len(members) % k else 0) for f in range(k)]
        # rotate which folds receive the remainder so totals stay balanced
        rot = int(ci) % k
        sizes = sizes[-rot:] + sizes[:-rot] if rot else sizes
        start = 0
        for f, size in enumerate(sizes):
            fold_units[f].extend(members[start : start + size])
            start += size
    folds = []
    for f in range(k):
        test = np.sort(np.concatenate([unit_rows[u] for u in fold_units[f]]))
        mask = np.ones(n, dtype=bool)
        mask[test] = False
        folds.append((np.flatnonzero(mask), test))
    return folds


def confusion_matrix(y_true: np.ndarray, y_pred: np.ndarray, n_classes: int) -> np.ndarray:
    cm = np.zeros((n_classes, n_classes), dtype=np.int64)
    np.add.at(cm, (y_true, y_pred), 1)
    return cm


def macro_scores(cm: np.ndarray) -> dict[str, float]:
    """Macro precision/recall/F1 from a confusion matrix (rows = true)."""
    tp = np.diag(cm).astype(float)
    pred = cm.sum(axis=0).astype(float)
    true = cm.sum(axis=1).astype(float)
    with np.errstate(divide="ignore", invalid="ignore"):
        precision = np.where(pred > 0, tp / pred, 0.0)
        recall = np.where(true > 0, tp / true, 0.0)
        f1 = np.where(precision + recall > 0, 2 * precision * recall / (precision + recall), 0.0)
    return {
        "precision": float(precision.mean()),
        "recall": float(recall.mean()),
        "f1": float(f1.mean()),
    }


@dataclass
class EvalReport:
    classes: list[str]
    per_fold: list[dict[str, float]]
    averages: dict[str, float]
    confusion: np.ndarray  # pooled over folds, rows = true class

    def to_json(self) -> dict:
        cm = self.confusion.astype(float)
        row_sums = cm.sum(axis=1, keepdims=True)
        col_sums = cm.sum(axis=0, keepdims=True)
        with np.errstate(divide="ignore", invalid="ignore"):
            row_pct = np.where(row_sums > 0, cm / row_sums, 0.0)
            col_pct = np.where(col_sums > 0, cm / col_sums, 0.0)
        return {
            "classes": self.classes,
            "per_fold": self.per_fold,
            "averages": self.averages,
            "confusion": self.confusion.tolist(),
            "confusion_row_percent": np.round(row_pct, 6).tolist(),
            "confusion_col_percent": np.round(col_pct, 6).tolist(),
        }


def evaluate(
    dataset: Dataset,
    folds: list[tuple[np.ndarray, np.ndarray]],
    fit_fn: Callable[[np.ndarray, np.ndarray], object],
) -> EvalReport:
    """Cross-validate: fit per fold, average macro metrics, pool confusion."""
    n_classes = len(dataset.classes)
    per_fold = []
    pooled = np.zeros((n_classes, n_classes), dtype=np.int64)
    for train_idx, test_idx in folds:
        model = fit_fn(dataset.X[train_idx], dataset.y[train_idx])
        y_pred = model.predict(dataset.X[test_idx])
        cm = confusion_matrix(dataset.y[test_idx], y_pred, n_classes)
        pooled += cm
        per_fold.append(macro_scores(cm))
    averages = {
        key: float(np.mean([fold[key] for fold in per_fold])) for key in ("precision", "recall", "f1")
    }
    return EvalReport(classes=dataset.classes, per_fold=per_fold, averages=averages, confusion=pooled)
