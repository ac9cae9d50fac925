"""Ego transfer network: per-transaction directed, typed, multi-edge graph.

Every edge touches the ego account. Parallel edges are kept (they feed the
edge-list features) and collapsed to a simple view for motif matching.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

from .ingest import AccountRegistry, TokenRegistry, Transaction


@dataclass
class EgoTransferNetwork:
    ego: str
    node_types: dict[str, str]  # node id -> E/A/C/N; exactly one E
    edges: list[tuple[str, str, str]]  # (source, target, token category), parallel allowed
    rejected: list[tuple[str, str]] = field(default_factory=list)  # (from, to) not touching ego

    @property
    def simple_view(self) -> set[tuple[str, str]]:
        return {(src, dst) for src, dst, _ in self.edges}

    def counterparts(self) -> list[str]:
        return [n for n in self.node_types if n != self.ego]


def build_etn(
    tx: Transaction,
    accounts: Optional[AccountRegistry] = None,
    tokens: Optional[TokenRegistry] = None,
) -> EgoTransferNetwork:
    """Build the ETN for one transaction.

    Registries are only needed when the transaction's transfers do not
    already carry resolved node types and token categories (they do after
    ingest). Transfers touching neither endpoint of the ego are rejected
    and reported, not raised.
    """
    ego = tx.ego_account
    node_types: dict[str, str] = {ego: "E"}
    edges: list[tuple[str, str, str]] = []
    rejected: list[tuple[str, str]] = []
    for tr in tx.transfers:
        src, dst = tr.from_account, tr.to_account
        if src != ego and dst != ego:
            rejected.append((src, dst))
            continue
        category = tr.category
        if category is None:
            if tokens is None:
                raise ValueError(f"transfer in {tx.tx_hash} has no resolved category and no registry given")
            category = tokens.category(tr.token_contract, tr.token_symbol) or "Unlabeled"
        src_type = tr.from_type if src != ego else "E"
        dst_type = tr.to_type if dst != ego else "E"
        if src != ego and src_type is None:
            if accounts is None:
                raise ValueError(f"transfer in {tx.tx_hash} has no resolved node type and no registry given")
            src_type = accounts.type_of(src, ego)
        if dst != ego and dst_type is None:
            if accounts is None:
                raise ValueError(f"transfer in {tx.tx_hash} has no resolved node type and no registry given")
            dst_type = accounts.type_of(dst, ego)
        if src != ego:
            node_types.setdefault(src, src_type)
        if dst != ego:
            node_types.setdefault(dst, dst_type)
        edges.append((src, dst, category))
    return EgoTransferNetwork(ego=ego, node_types=node_types, edges=edges, rejected=rejected)


_DOT_SHAPES = {"E": "doublecircle", "A": "ellipse", "C": "box", "N": "diamond"}


def to_dot(etn: EgoTransferNetwork) -> str:
    """Render one ETN in DOT format (node shape by type, edge label = category)."""
    lines = ["digraph etn {"]
    for node in sorted(etn.node_types):
        ntype = etn.node_types[node]
        shape = _DOT_SHAPES.get(ntype, "ellipse")
        lines.append(f'  "{node}" [shape={shape}, label="{node}\\n({ntype})"];')
    for src, dst, category in etn.edges:
        lines.append(f'  "{src}" -> "{dst}" [label="{category}"];')
    lines.append("}")
    return "\n".join(lines) + "\n"
