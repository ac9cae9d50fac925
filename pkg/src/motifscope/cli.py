"""Command-line interface and pipeline orchestration.

Exit codes: 0 success, 2 unusable input (InputError), 3 stage failure.
Failures print a machine-readable JSON object on stderr.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import os
import sys
from collections import Counter
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from . import __version__, etn as etn_mod, motif, storage
from .featurize import featurize_store
from .ingest import (
    AccountRegistry,
    InputError,
    METHOD_GROUPS,
    TokenRegistry,
    UNKNOWN,
    attach_methods,
    filter_spam,
    group_methods,
    group_transactions,
    load_method_labels,
    load_method_mapping,
    load_transfers,
)
from .learn import (
    Dataset,
    build_dataset,
    evaluate,
    sample_weights,
    stratified_kfold,
)
from .models import DecisionTree, LogisticModel, RandomForest
from .profile import (
    DEFAULT_MIN_MATCHES,
    LINKAGES,
    Profiles,
    build_profiles,
    emit_clustermap_data,
    filter_min_matches,
    hcluster,
)
from .signatures import (
    LeafSignature,
    SUPPORT_THRESHOLD,
    ccp_path,
    match_signatures,
    mine_signatures,
    select_pruned,
    tree_to_dot,
)
from .synth import generate, load_config, load_mixes

PACKAGED_METHOD_GROUPS = Path(__file__).parent / "data" / "method_groups.json"


class StageError(RuntimeError):
    """A pipeline stage failed; carries the stage name."""

    def __init__(self, stage: str, cause: BaseException):
        super().__init__(f"stage {stage} failed: {cause}")
        self.stage = stage
        self.cause = cause


def _print(obj) -> None:
    sys.stdout.write(storage.dumps(obj) + "\n")


def _fail(stage: str, exc: BaseException, code: int) -> int:
    sys.stderr.write(
        storage.dumps({"error": {"stage": stage, "type": type(exc).__name__, "message": str(exc)}})
        + "\n"
    )
    return code


# ---------------------------------------------------------------------------
# model (de)serialization envelope
# ---------------------------------------------------------------------------

def save_model(path, kind: str, mode: str, classes, vocabulary, params: dict, model) -> None:
    storage.write_json(
        path,
        {
            "format": "motifscope-model",
            "kind": kind,
            "mode": mode,
            "classes": list(classes),
            "vocabulary": list(vocabulary),
            "params": params,
            "model": model.to_dict(),
        },
    )


def load_model(path) -> dict:
    try:
        obj = storage.read_json(path)
    except (OSError, json.JSONDecodeError) as exc:
        raise InputError(f"cannot read model file {path}: {exc}") from exc
    if obj.get("format") != "motifscope-model":
        raise InputError(f"{path} is not a motifscope model file")
    kind = obj.get("kind")
    if kind == "lr":
        obj["instance"] = LogisticModel.from_dict(obj["model"])
    elif kind == "dt":
        obj["instance"] = DecisionTree.from_dict(obj["model"])
    elif kind == "rf":
        obj["instance"] = RandomForest.from_dict(obj["model"])
    else:
        raise InputError(f"unknown model kind {kind!r} in {path}")
    return obj


def _features_mode(path) -> Optional[str]:
    """Mode recorded on the first line of a features file (None if empty)."""
    try:
        with open(path, encoding="utf-8") as fh:
            for line in fh:
                if line.strip():
                    return json.loads(line).get("mode")
    except OSError as exc:
        raise InputError(f"cannot read features file {path}: {exc}") from exc
    return None


def _load_labeled_rows(features_path, labels_path) -> list[tuple[str, str, dict, str]]:
    labels = storage.read_labels(labels_path)
    rows = []
    for tx_hash, ego, feats in storage.iter_features(features_path):
        group = labels.get((tx_hash, ego))
        if group in METHOD_GROUPS:
            rows.append((tx_hash, ego, feats, group))
    if not rows:
        raise InputError("no feature rows with labels in the retained method groups")
    return rows


def _fit_kind(kind: str, dataset: Dataset, params: dict, seed: int):
    sw = sample_weights(dataset.y, len(dataset.classes))
    if kind == "lr":
        return LogisticModel.fit(
            dataset.X, dataset.y, sw, n_classes=len(dataset.classes), l2=params.get("l2", 1.0)
        )
    if kind == "dt":
        return DecisionTree.fit(
            dataset.X, dataset.y, sw, n_classes=len(dataset.classes),
            min_leaf=params.get("min_leaf", 10),
        )
    if kind == "rf":
        return RandomForest.fit(
            dataset.X, dataset.y, sw, n_classes=len(dataset.classes),
            n_trees=params.get("trees", 100), min_leaf=params.get("min_leaf", 10),
            max_features=params.get("max_features", "sqrt"), seed=seed,
        )
    raise InputError(f"unknown model kind {kind!r}")


def _fold_fit_fn(kind: str, n_classes: int, params: dict, seed: int):
    def fit(X, y):
        sw = sample_weights(y, n_classes)
        if kind == "lr":
            return LogisticModel.fit(X, y, sw, n_classes=n_classes, l2=params.get("l2", 1.0))
        if kind == "dt":
            return DecisionTree.fit(X, y, sw, n_classes=n_classes, min_leaf=params.get("min_leaf", 10))
        return RandomForest.fit(
            X, y, sw, n_classes=n_classes, n_trees=params.get("trees", 100),
            min_leaf=params.get("min_leaf", 10), max_features=params.get("max_features", "sqrt"),
            seed=seed,
        )

    return fit


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------

def cmd_ingest(args) -> int:
    tokens = TokenRegistry.from_file(args.tokens)
    accounts = AccountRegistry.from_file(args.accounts)
    result = load_transfers(args.transfers, tokens, accounts)
    transactions = group_transactions(result.transfers)
    n_before = len(transactions)
    transactions = filter_spam(transactions, tokens)
    if args.methods:
        mapping = load_method_mapping(args.method_groups or PACKAGED_METHOD_GROUPS)
        labels = group_methods(load_method_labels(args.methods), mapping)
        attach_methods(transactions, labels)
    label_counts = Counter(tx.method_group for tx in transactions if tx.method_group)
    report = {
        "transfers_read": len(result.transfers) + len(result.rejects),
        "transfers_kept": len(result.transfers),
        "rejected": result.reject_counts(),
        "transactions": len(transactions),
        "transactions_spam_filtered": n_before - len(transactions),
        "labeled": dict(sorted(label_counts.items())),
    }
    storage.write_store(args.out, transactions, report)
    _print(report)
    return 0


def cmd_stats(args) -> int:
    per_account: dict[str, dict] = {}
    histogram: Counter = Counter()
    total = 0
    for tx in storage.iter_store(args.store):
        total += 1
        histogram[len(tx.transfers)] += 1
        acc = per_account.setdefault(
            tx.ego_account, {"transactions": 0, "tokens": set(), "unlabeled": 0}
        )
        acc["transactions"] += 1
        acc["unlabeled"] += int(tx.method_group in (None, UNKNOWN))
        for tr in tx.transfers:
            acc["tokens"].add(tr.token_contract or tr.token_symbol)
    report = {
        "transactions": total,
        "accounts": {
            ego: {
                "transactions": acc["transactions"],
                "tokens": len(acc["tokens"]),
                "fraction_unlabeled": round(acc["unlabeled"] / acc["transactions"], 6),
            }
            for ego, acc in sorted(per_account.items())
        },
        "transfers_per_transaction": {str(k): v for k, v in sorted(histogram.items())},
        "single_transfer_fraction": round(histogram.get(1, 0) / total, 6) if total else 0.0,
    }
    if args.out:
        storage.write_json(args.out, report)
    _print(report)
    return 0


def cmd_etn(args) -> int:
    hits = [tx for tx in storage.iter_store(args.store) if tx.tx_hash == args.tx]
    if args.ego:
        hits = [tx for tx in hits if tx.ego_account == args.ego]
    if not hits:
        raise InputError(f"transaction {args.tx} not found in store {args.store}")
    if len(hits) > 1:
        egos = ", ".join(tx.ego_account for tx in hits)
        raise InputError(f"transaction {args.tx} has several egos ({egos}); pass --ego")
    network = etn_mod.build_etn(hits[0])
    dot = etn_mod.to_dot(network)
    with open(args.dot, "w", encoding="utf-8") as fh:
        fh.write(dot)
    _print({"tx_hash": args.tx, "ego": hits[0].ego_account, "nodes": len(network.node_types),
            "edges": len(network.edges), "dot": args.dot})
    return 0


def cmd_featurize(args) -> int:
    catalog = motif.load_catalog(args.catalog) if args.catalog else None
    stats = featurize_store(
        args.store, args.mode, args.out,
        threads=args.threads, catalog=catalog, max_nodes=args.max_nodes,
    )
    _print({
        "transactions": stats.transactions,
        "oversize": stats.oversize,
        "rejected_transfers": stats.rejected_transfers,
        "out": args.out,
    })
    return 0


def cmd_train(args) -> int:
    rows = _load_labeled_rows(args.features, args.labels)
    dataset = build_dataset(rows)
    params = {
        "l2": args.l2,
        "min_leaf": args.min_leaf,
        "trees": args.trees,
        "max_features": None if args.max_features == "all" else args.max_features,
    }
    model = _fit_kind(args.model, dataset, params, args.seed)
    file_mode = _features_mode(args.features)
    mode = motif.normalize_mode(args.mode) if args.mode else (file_mode or "M+E")
    if args.mode and file_mode and mode != file_mode:
        raise InputError(f"--mode {mode} does not match the features file mode {file_mode}")
    save_model(args.out, args.model, mode, dataset.classes,
               dataset.vocabulary, params, model)
    _print({"model": args.model, "rows": dataset.n_rows, "classes": dataset.classes,
            "features": len(dataset.vocabulary), "out": args.out})
    return 0


def cmd_eval(args) -> int:
    spec = load_model(args.model)
    rows = _load_labeled_rows(args.features, args.labels)
    dataset = build_dataset(rows, classes=spec["classes"], vocabulary=spec["vocabulary"])
    folds = stratified_kfold(dataset.y, k=args.folds, seed=args.seed, groups=dataset.tx_hashes)
    report = evaluate(
        dataset, folds, _fold_fit_fn(spec["kind"], len(dataset.classes), spec["params"], args.seed)
    )
    storage.write_json(args.report, report.to_json())
    _print({"model": spec["kind"], "folds": args.folds, "averages": report.averages,
            "report": args.report})
    return 0


def _ccp_cv_rows(dataset: Dataset, alphas, seed: int, folds_k: int, min_leaf: int):
    """Cross-validated macro metrics at each pruning alpha (Fig. 6a analogue)."""
    from .learn import confusion_matrix, macro_scores

    folds = stratified_kfold(dataset.y, k=folds_k, seed=seed, groups=dataset.tx_hashes)
    K = len(dataset.classes)
    pooled = [np.zeros((K, K), dtype=np.int64) for _ in alphas]
    for train_idx, test_idx in folds:
        sw = sample_weights(dataset.y[train_idx], K)
        tree = DecisionTree.fit(
            dataset.X[train_idx], dataset.y[train_idx], sw, n_classes=K, min_leaf=min_leaf
        )
        path = ccp_path(tree)
        for ai, alpha in enumerate(alphas):
            sub, _ = select_pruned(path, alpha=alpha)
            pred = sub.predict(dataset.X[test_idx])
            pooled[ai] += confusion_matrix(dataset.y[test_idx], pred, K)
    return [macro_scores(cm) for cm in pooled]


def cmd_prune(args) -> int:
    spec = load_model(args.model)
    if spec["kind"] != "dt":
        raise InputError("prune requires a decision-tree model")
    tree: DecisionTree = spec["instance"]
    path = ccp_path(tree)
    if args.target_leaves is None and args.alpha is None:
        raise InputError("pass --target-leaves or --alpha")
    pruned, entry = select_pruned(path, target_leaves=args.target_leaves, alpha=args.alpha)
    save_model(args.out, "dt", spec["mode"], spec["classes"], spec["vocabulary"],
               {**spec["params"], "pruned_alpha": entry.alpha, "pruned_leaves": entry.leaf_count},
               pruned)
    if args.path:
        metric_rows = None
        if args.features and args.labels:
            rows = _load_labeled_rows(args.features, args.labels)
            dataset = build_dataset(rows, classes=spec["classes"], vocabulary=spec["vocabulary"])
            metric_rows = _ccp_cv_rows(
                dataset, [e.alpha for e in path], args.seed, args.folds,
                spec["params"].get("min_leaf", 10),
            )
        with open(args.path, "w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["alpha", "leaves", "precision", "recall", "f1"])
            for i, e in enumerate(path):
                metrics = metric_rows[i] if metric_rows else {}
                writer.writerow([
                    f"{e.alpha:.12g}", e.leaf_count,
                    *(f"{metrics[k]:.6f}" if metrics else "" for k in ("precision", "recall", "f1")),
                ])
    if args.dot:
        with open(args.dot, "w", encoding="utf-8") as fh:
            fh.write(tree_to_dot(pruned, spec["vocabulary"], spec["classes"]))
    _print({"alpha": entry.alpha, "leaves": entry.leaf_count, "path_entries": len(path),
            "out": args.out})
    return 0


def cmd_signatures(args) -> int:
    spec = load_model(args.model)
    if spec["kind"] != "dt":
        raise InputError("signature mining requires a decision-tree model")
    rows = _load_labeled_rows(args.features, args.labels)
    dataset = build_dataset(rows, classes=spec["classes"], vocabulary=spec["vocabulary"])
    signatures, discrepancies = mine_signatures(
        spec["instance"], dataset.X, spec["vocabulary"], spec["classes"],
        threshold=args.threshold, method=args.method,
    )
    storage.write_json(args.out, {
        "format": "motifscope-signatures",
        "mode": spec["mode"],
        "threshold": args.threshold,
        "classes": spec["classes"],
        "signatures": [sig.to_json() for sig in signatures],
        "discrepancies": discrepancies,
    })
    _print({"leaves": len(signatures),
            "usable": sum(1 for s in signatures if s.items),
            "discrepancies": len(discrepancies), "out": args.out})
    return 0


def load_signatures(path) -> list[LeafSignature]:
    try:
        obj = storage.read_json(path)
    except (OSError, json.JSONDecodeError) as exc:
        raise InputError(f"cannot read signatures file {path}: {exc}") from exc
    if obj.get("format") != "motifscope-signatures":
        raise InputError(f"{path} is not a motifscope signatures file")
    return [
        LeafSignature(
            leaf_id=int(s["leaf"]), group=s["group"], probability=float(s.get("probability", 0.0)),
            samples=int(s.get("samples", 0)), items=list(s["items"]),
            item_supports={k: float(v) for k, v in s.get("item_supports", {}).items()},
            support=float(s.get("support", 0.0)),
        )
        for s in obj.get("signatures", [])
    ]


def cmd_match(args) -> int:
    signatures = load_signatures(args.signatures)
    matched = total = 0
    with open(args.out, "w", encoding="utf-8") as fh:
        for tx_hash, ego, feats in storage.iter_features(args.features):
            total += 1
            leaves, groups = match_signatures(feats, signatures)
            matched += bool(leaves)
            fh.write(storage.dumps(
                {"tx_hash": tx_hash, "ego": ego, "leaves": leaves, "groups": groups}
            ) + "\n")
    _print({"transactions": total, "matched": matched, "out": args.out})
    return 0


def _read_matches(path):
    try:
        fh = open(path, encoding="utf-8")
    except OSError as exc:
        raise InputError(f"cannot read matches file {path}: {exc}") from exc
    with fh:
        for line in fh:
            if line.strip():
                obj = json.loads(line)
                yield obj["ego"], obj.get("leaves", [])


def cmd_profile(args) -> int:
    profiles = build_profiles(_read_matches(args.matches))
    with open(args.out, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["account", "total"] + [f"leaf_{j}" for j in profiles.leaf_ids])
        for i, account in enumerate(profiles.accounts):
            writer.writerow([account, int(profiles.totals[i])] + [int(v) for v in profiles.raw[i]])
    _print({"accounts": len(profiles.accounts), "signatures": len(profiles.leaf_ids),
            "out": args.out})
    return 0


def read_profiles_csv(path) -> Profiles:
    try:
        fh = open(path, encoding="utf-8", newline="")
    except OSError as exc:
        raise InputError(f"cannot read profiles file {path}: {exc}") from exc
    with fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if not header or header[:2] != ["account", "total"] or not all(
            h.startswith("leaf_") for h in header[2:]
        ):
            raise InputError(f"profiles file {path} must have header account,total,leaf_*")
        leaf_ids = [int(h[5:]) for h in header[2:]]
        accounts, rows = [], []
        for row in reader:
            if not row:
                continue
            accounts.append(row[0])
            rows.append([int(v) for v in row[2:]])
    raw = np.array(rows, dtype=np.int64) if rows else np.zeros((0, len(leaf_ids)), dtype=np.int64)
    return Profiles(accounts=accounts, leaf_ids=leaf_ids, raw=raw)


def cmd_cluster(args) -> int:
    profiles = read_profiles_csv(args.profiles)
    profiles = filter_min_matches(profiles, args.min_matches)
    if len(profiles.accounts) < 2:
        raise InputError("clustering needs at least 2 accounts after filtering")
    result = hcluster(profiles.zscored, method=args.linkage)
    storage.write_json(args.out, result.to_json(profiles.accounts))
    if args.plotdata:
        _write_plotdata(args.plotdata, result, profiles)
    _print({"accounts": len(profiles.accounts), "chosen_k": result.chosen_k,
            "silhouette": result.silhouettes.get(result.chosen_k), "out": args.out})
    return 0


def _write_plotdata(outdir, result, profiles: Profiles) -> None:
    data = emit_clustermap_data(result, profiles)
    os.makedirs(outdir, exist_ok=True)
    storage.write_json(os.path.join(outdir, "clustermap.json"), data)
    with open(os.path.join(outdir, "zscores.csv"), "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["account"] + [f"leaf_{j}" for j in data["col_order"]])
        for account, zrow in zip(data["row_order"], data["zscores"]):
            writer.writerow([account] + [f"{v:.9f}" for v in zrow])
    with open(os.path.join(outdir, "clusters.csv"), "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["account", "cluster"])
        for account in sorted(data["clusters"]):
            writer.writerow([account, data["clusters"][account]])


def cmd_synth(args) -> int:
    config = load_config(args.config)
    mixes = load_mixes(args.mixes) if args.mixes else None
    result = generate(
        config, args.n, args.seed, args.out, skew=args.skew,
        n_egos=args.egos, pool_size=args.pool, mixes=mixes,
    )
    _print({"transactions": result.n_transactions, "transfers": result.n_transfers,
            "groups": dict(sorted(result.group_counts.items())), "out": str(result.out_dir)})
    return 0


# ---------------------------------------------------------------------------
# pipeline
# ---------------------------------------------------------------------------

@dataclass
class PipelineConfig:
    transfers: Optional[str] = None
    tokens: Optional[str] = None
    accounts: Optional[str] = None
    methods: Optional[str] = None
    method_groups: Optional[str] = None
    signatures: Optional[str] = None  # match-only runs: pre-mined signatures
    out: Optional[str] = None
    mode: str = "M+E"
    model: str = "dt"
    seed: int = 0
    threads: int = 1
    folds: int = 10
    min_leaf: int = 10
    l2: float = 1.0
    trees: int = 100
    threshold: float = SUPPORT_THRESHOLD
    target_leaves: Optional[int] = None
    alpha: Optional[float] = None
    min_matches: int = DEFAULT_MIN_MATCHES
    linkage: str = "ward"
    max_nodes: int = motif.DEFAULT_MAX_NODES
    catalog: Optional[str] = None

    def to_json(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_json(cls, obj: dict) -> "PipelineConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(obj) - known
        if unknown:
            raise InputError(f"unknown pipeline config keys: {sorted(unknown)}")
        return cls(**obj)

    @classmethod
    def from_file(cls, path) -> "PipelineConfig":
        try:
            with open(path, encoding="utf-8") as fh:
                return cls.from_json(json.load(fh))
        except (OSError, json.JSONDecodeError) as exc:
            raise InputError(f"cannot read pipeline config {path}: {exc}") from exc


def _stage(manifest: dict, name: str, fn):
    try:
        out = fn()
    except InputError:
        raise
    except Exception as exc:
        raise StageError(name, exc) from exc
    manifest["stages"].append(name)
    return out


def run_pipeline(cfg: PipelineConfig) -> dict:
    """ingest -> featurize -> train/eval -> prune -> signatures -> match ->
    profile -> cluster, with a manifest of versions, seeds, and digests."""
    for field_name in ("transfers", "tokens", "accounts", "out"):
        if not getattr(cfg, field_name):
            raise InputError(f"pipeline config is missing {field_name!r}")
    import scipy

    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    manifest: dict = {
        "tool": "motifscope",
        "version": __version__,
        "python": ".".join(map(str, sys.version_info[:3])),
        "numpy": np.__version__,
        "scipy": scipy.__version__,
        "seed": cfg.seed,
        "config": cfg.to_json(),
        "inputs": {},
        "stages": [],
        "artifacts": {},
        "notes": [],
    }
    for name in ("transfers", "tokens", "accounts", "methods", "method_groups", "signatures", "catalog"):
        path = getattr(cfg, name)
        if path:
            manifest["inputs"][name] = storage.sha256_file(path)

    store_dir = out / "store"
    features_path = out / "features.jsonl"
    ns = argparse.Namespace

    _stage(manifest, "ingest", lambda: cmd_ingest(ns(
        transfers=cfg.transfers, tokens=cfg.tokens, accounts=cfg.accounts,
        methods=cfg.methods, method_groups=cfg.method_groups, out=str(store_dir),
    )))
    _stage(manifest, "featurize", lambda: cmd_featurize(ns(
        store=str(store_dir), mode=cfg.mode, out=str(features_path),
        threads=cfg.threads, catalog=cfg.catalog, max_nodes=cfg.max_nodes,
    )))

    labels_path = store_dir / "labels.csv"
    have_labels = cfg.methods is not None
    signatures_path: Optional[Path] = None
    if have_labels:
        model_path = out / "model.json"
        _stage(manifest, "train", lambda: cmd_train(ns(
            features=str(features_path), labels=str(labels_path), model=cfg.model,
            mode=cfg.mode, seed=cfg.seed, out=str(model_path),
            l2=cfg.l2, min_leaf=cfg.min_leaf, trees=cfg.trees, max_features="sqrt",
        )))
        _stage(manifest, "eval", lambda: cmd_eval(ns(
            model=str(model_path), features=str(features_path), labels=str(labels_path),
            folds=cfg.folds, seed=cfg.seed, report=str(out / "eval_report.json"),
        )))
        # the signature flow always runs on a decision tree (the paper's Fig. 6)
        dt_path = model_path
        if cfg.model != "dt":
            dt_path = out / "model_dt.json"
            _stage(manifest, "train_dt", lambda: cmd_train(ns(
                features=str(features_path), labels=str(labels_path), model="dt",
                mode=cfg.mode, seed=cfg.seed, out=str(dt_path),
                l2=cfg.l2, min_leaf=cfg.min_leaf, trees=cfg.trees, max_features="sqrt",
            )))
        pruned_path = out / "pruned.json"
        target = cfg.target_leaves
        alpha = cfg.alpha
        if target is None and alpha is None:
            alpha = 0.0  # unpruned by default; configure target_leaves to prune
            manifest["notes"].append("no pruning target configured; using alpha=0 (unpruned)")
        _stage(manifest, "prune", lambda: cmd_prune(ns(
            model=str(dt_path), target_leaves=target, alpha=alpha,
            out=str(pruned_path), path=str(out / "ccp_path.csv"),
            features=str(features_path), labels=str(labels_path),
            folds=cfg.folds, seed=cfg.seed, dot=str(out / "pruned_tree.dot"),
        )))
        signatures_path = out / "signatures.json"
        _stage(manifest, "signatures", lambda: cmd_signatures(ns(
            model=str(pruned_path), features=str(features_path), labels=str(labels_path),
            threshold=cfg.threshold, method="greedy", out=str(signatures_path),
        )))
    else:
        if not cfg.signatures:
            raise InputError("no methods file and no pre-mined signatures: nothing to match")
        signatures_path = Path(cfg.signatures)
        manifest["notes"].append("match-only run: no labels; using provided signatures")

    matches_path = out / "matches.jsonl"
    _stage(manifest, "match", lambda: cmd_match(ns(
        signatures=str(signatures_path), features=str(features_path), out=str(matches_path),
    )))
    profiles_path = out / "profiles.csv"
    _stage(manifest, "profile", lambda: cmd_profile(ns(
        matches=str(matches_path), out=str(profiles_path),
    )))
    profiles = filter_min_matches(read_profiles_csv(profiles_path), cfg.min_matches)
    if len(profiles.accounts) >= 2:
        _stage(manifest, "cluster", lambda: cmd_cluster(ns(
            profiles=str(profiles_path), min_matches=cfg.min_matches, linkage=cfg.linkage,
            out=str(out / "clusters.json"), plotdata=str(out / "plotdata"),
        )))
    else:
        manifest["notes"].append(
            f"clustering skipped: {len(profiles.accounts)} account(s) after the "
            f"min-matches filter (need 2)"
        )

    for path in sorted(out.rglob("*")):
        if path.is_file() and path.name != "manifest.json":
            manifest["artifacts"][path.relative_to(out).as_posix()] = storage.sha256_file(path)
    storage.write_json(out / "manifest.json", manifest)
    return manifest


def cmd_pipeline(args) -> int:
    cfg = PipelineConfig.from_file(args.config) if args.config else PipelineConfig()
    overrides = {
        "transfers": args.transfers, "tokens": args.tokens, "accounts": args.accounts,
        "methods": args.methods, "method_groups": args.method_groups,
        "signatures": args.signatures, "out": args.out, "mode": args.mode,
        "model": args.model, "folds": args.folds, "min_leaf": args.min_leaf,
        "l2": args.l2, "trees": args.trees, "threshold": args.threshold,
        "target_leaves": args.target_leaves, "alpha": args.alpha,
        "min_matches": args.min_matches, "linkage": args.linkage,
        "catalog": args.catalog, "max_nodes": args.max_nodes,
    }
    for key, value in overrides.items():
        if value is not None:
            setattr(cfg, key, value)
    if args.seed is not None:
        cfg.seed = args.seed
    if args.threads is not None:
        cfg.threads = args.threads
    manifest = run_pipeline(cfg)
    _print({"out": cfg.out, "stages": manifest["stages"],
            "artifacts": len(manifest["artifacts"])})
    return 0


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="motifscope",
        description="Ego transfer network motifs: featurize, classify, mine signatures, profile accounts.",
    )
    parser.add_argument("--version", action="version", version=f"motifscope {__version__}")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=0, help="random seed (default 0)")
    common.add_argument("--threads", type=int, default=1, help="worker cap for parallel stages")
    common.add_argument("--config", default=None, help="pipeline config JSON (pipeline command)")
    sub = parser.add_subparsers(dest="cmd", required=True)

    p = sub.add_parser("ingest", parents=[common], help="load and validate raw files into a store")
    p.add_argument("--transfers", required=True)
    p.add_argument("--tokens", required=True)
    p.add_argument("--accounts", required=True)
    p.add_argument("--methods", default=None)
    p.add_argument("--method-groups", dest="method_groups", default=None)
    p.add_argument("--out", required=True, help="store directory")
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("stats", parents=[common], help="corpus statistics")
    p.add_argument("--store", required=True)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_stats)

    p = sub.add_parser("etn", parents=[common], help="export one ETN as DOT")
    p.add_argument("--store", required=True)
    p.add_argument("--tx", required=True)
    p.add_argument("--ego", default=None)
    p.add_argument("--dot", required=True)
    p.set_defaults(func=cmd_etn)

    p = sub.add_parser("featurize", parents=[common], help="extract motif/edge features")
    p.add_argument("--store", required=True)
    p.add_argument("--mode", default="M+E", choices=["M", "E", "ME", "M+E", "MxE"])
    p.add_argument("--out", required=True)
    p.add_argument("--catalog", default=None, help="motif catalog JSON override")
    p.add_argument("--max-nodes", dest="max_nodes", type=int, default=motif.DEFAULT_MAX_NODES)
    p.set_defaults(func=cmd_featurize)

    p = sub.add_parser("train", parents=[common], help="fit a classifier on labeled features")
    p.add_argument("--features", required=True)
    p.add_argument("--labels", required=True)
    p.add_argument("--model", required=True, choices=["lr", "dt", "rf"])
    p.add_argument("--mode", default=None, choices=["M", "E", "ME", "M+E", "MxE"])
    p.add_argument("--l2", type=float, default=1.0)
    p.add_argument("--min-leaf", dest="min_leaf", type=int, default=10)
    p.add_argument("--trees", type=int, default=100)
    p.add_argument("--max-features", dest="max_features", default="sqrt", choices=["sqrt", "all"])
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", parents=[common], help="stratified cross-validation report")
    p.add_argument("--model", required=True)
    p.add_argument("--features", required=True)
    p.add_argument("--labels", required=True)
    p.add_argument("--folds", type=int, default=10)
    p.add_argument("--report", required=True)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("prune", parents=[common], help="cost-complexity pruning")
    p.add_argument("--model", required=True, help="trained dt model JSON")
    p.add_argument("--target-leaves", dest="target_leaves", type=int, default=None)
    p.add_argument("--alpha", type=float, default=None)
    p.add_argument("--out", required=True)
    p.add_argument("--path", default=None, help="write the alpha/leaves/CV-metric table (CSV)")
    p.add_argument("--features", default=None, help="features for the CV columns of --path")
    p.add_argument("--labels", default=None)
    p.add_argument("--folds", type=int, default=10)
    p.add_argument("--dot", default=None, help="write pruned tree in DOT format")
    p.set_defaults(func=cmd_prune)

    p = sub.add_parser("signatures", parents=[common], help="mine per-leaf signatures")
    p.add_argument("--model", required=True, help="pruned dt model JSON")
    p.add_argument("--features", required=True)
    p.add_argument("--labels", required=True)
    p.add_argument("--threshold", type=float, default=SUPPORT_THRESHOLD)
    p.add_argument("--method", default="greedy", choices=["greedy", "exhaustive"])
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_signatures)

    p = sub.add_parser("match", parents=[common], help="match signatures against features")
    p.add_argument("--signatures", required=True)
    p.add_argument("--features", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_match)

    p = sub.add_parser("profile", parents=[common], help="account signature-usage profiles")
    p.add_argument("--matches", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_profile)

    p = sub.add_parser("cluster", parents=[common], help="hierarchical clustering of profiles")
    p.add_argument("--profiles", required=True)
    p.add_argument("--linkage", default="ward", choices=list(LINKAGES))
    p.add_argument("--min-matches", dest="min_matches", type=int, default=DEFAULT_MIN_MATCHES)
    p.add_argument("--out", required=True)
    p.add_argument("--plotdata", default=None)
    p.set_defaults(func=cmd_cluster)

    p = sub.add_parser("synth", parents=[common], help="generate a synthetic corpus")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--skew", default="table2", choices=["table2", "uniform"])
    p.add_argument("--egos", type=int, default=None)
    p.add_argument("--pool", type=int, default=None)
    p.add_argument("--mixes", default=None, help="account activity mixes JSON")
    p.set_defaults(func=cmd_synth)

    # pipeline declares its own globals with None defaults so a config file's
    # seed/threads are only overridden when the flags are actually passed
    p = sub.add_parser("pipeline", help="run all stages end to end")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--threads", type=int, default=None)
    p.add_argument("--config", default=None, help="pipeline config JSON")
    p.add_argument("--transfers", default=None)
    p.add_argument("--tokens", default=None)
    p.add_argument("--accounts", default=None)
    p.add_argument("--methods", default=None)
    p.add_argument("--method-groups", dest="method_groups", default=None)
    p.add_argument("--signatures", default=None, help="pre-mined signatures for match-only runs")
    p.add_argument("--out", default=None)
    p.add_argument("--mode", default=None, choices=["M", "E", "ME", "M+E", "MxE"])
    p.add_argument("--model", default=None, choices=["lr", "dt", "rf"])
    p.add_argument("--folds", type=int, default=None)
    p.add_argument("--min-leaf", dest="min_leaf", type=int, default=None)
    p.add_argument("--l2", type=float, default=None)
    p.add_argument("--trees", type=int, default=None)
    p.add_argument("--threshold", type=float, default=None)
    p.add_argument("--target-leaves", dest="target_leaves", type=int, default=None)
    p.add_argument("--alpha", type=float, default=None)
    p.add_argument("--min-matches", dest="min_matches", type=int, default=None)
    p.add_argument("--linkage", default=None, choices=list(LINKAGES))
    p.add_argument("--catalog", default=None)
    p.add_argument("--max-nodes", dest="max_nodes", type=int, default=None)
    p.set_defaults(func=cmd_pipeline)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except InputError as exc:
        return _fail(args.cmd, exc, 2)
    except StageError as exc:
        return _fail(exc.stage, exc.cause, 3)
    except Exception as exc:  # stage failure inside a single command
        return _fail(args.cmd, exc, 3)


if __name__ == "__main__":
    sys.exit(main())
