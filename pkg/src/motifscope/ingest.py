"""File ingestion: transfer records, token/account registries, method labels.

All inputs are local files (CSV for transfers and labels, JSON for
registries). Rows that fail validation are rejected with a reason code and
counted, never silently dropped.
"""

from __future__ import annotations

import csv
import json
from collections import Counter
from dataclasses import dataclass, field
from typing import Optional

# Token categories (closed vocabulary; Unlabeled covers unknown tokens).
CATEGORIES = (
    "Cryptocurrency",
    "Stablecoin",
    "Marketplace",
    "Other",
    "NFT & Metaverse",
    "Network",
    "Financial Service",
    "Synthetic",
    "Bridge",
    "Unlabeled",
)

# The eight method groups retained for classification.
METHOD_GROUPS = (
    "Transfer",
    "Swap",
    "Withdraw",
    "Deposit",
    "ClaimReward",
    "Borrow",
    "Repay",
    "Mint",
)

# Groups merged into a retained group.
GROUP_ALIASES = {"Exchange": "Swap", "Redeem": "Withdraw", "Claim Reward": "ClaimReward"}

# Groups that exist in the raw data but fall below the sample-size cutoff.
EXCLUDED_GROUPS = ("Exit", "Burn", "Stake")

UNKNOWN = "Unknown"

TRANSFER_COLUMNS = (
    "tx_hash",
    "ego",
    "from",
    "to",
    "token_contract",
    "token_symbol",
    "amount",
    "block_number",
)


class InputError(ValueError):
    """Unusable input file or configuration (CLI exit code 2)."""


def is_null_address(addr: str) -> bool:
    """The all-zero address (any length, with or without 0x prefix)."""
    body = addr[2:] if addr.startswith(("0x", "0X")) else addr
    return len(body) > 0 and set(body) == {"0"}


@dataclass
class TokenTransfer:
    """One directed token movement inside a transaction."""

    tx_hash: str
    from_account: str
    to_account: str
    token_symbol: str
    token_contract: str
    amount: float
    block_number: int
    ego_account: str
    # Resolved at ingest so downstream stages need no registries.
    category: Optional[str] = None
    from_type: Optional[str] = None
    to_type: Optional[str] = None


@dataclass
class Transaction:
    tx_hash: str
    ego_account: str
    transfers: list[TokenTransfer]
    method_group: Optional[str] = None


@dataclass
class MethodLabel:
    tx_hash: str
    raw_method: str
    method_group: Optional[str] = None


class TokenRegistry:
    """Token -> (category, spam flag), keyed by contract with symbol fallback."""

    def __init__(self):
        self._by_contract: dict[str, tuple[str, bool]] = {}
        self._by_symbol: dict[str, tuple[str, bool]] = {}

    @classmethod
    def from_file(cls, path) -> "TokenRegistry":
        reg = cls()
        try:
            with open(path, encoding="utf-8") as fh:
                entries = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise InputError(f"cannot read token registry {path}: {exc}") from exc
        for entry in entries:
            reg.add(
                contract=entry.get("contract", ""),
                symbol=entry.get("symbol", ""),
                category=entry.get("category", "Unlabeled"),
                is_spam=bool(entry.get("is_spam", False)),
            )
        return reg

    def add(self, contract: str, symbol: str, category: str, is_spam: bool) -> None:
        if is_spam:
            record = ("", True)  # spam tokens carry no category
        else:
            if category not in CATEGORIES:
                raise InputError(f"unknown token category {category!r} for {symbol or contract}")
            record = (category, False)
        if contract:
            self._by_contract[contract.lower()] = record
        if symbol:
            self._by_symbol[symbol] = record

    def _lookup(self, contract: str, symbol: str) -> tuple[str, bool]:
        rec = self._by_contract.get(contract.lower()) if contract else None
        if rec is None and symbol:
            rec = self._by_symbol.get(symbol)
        if rec is None:
            return ("Unlabeled", False)  # absent from registry: unlabeled, not spam
        return rec

    def category(self, contract: str, symbol: str) -> str:
        cat, spam = self._lookup(contract, symbol)
        return cat if not spam else ""

    def is_spam(self, contract: str, symbol: str) -> bool:
        return self._lookup(contract, symbol)[1]


class AccountRegistry:
    """Account -> type code: E (ego), A (address), C (contract), N (null).

    Types are ego-relative: only the transaction's own ego is E; other
    accounts registered as egos are plain addresses in that network. The
    all-zero address is always N, taking precedence over registry entries.
    """

    def __init__(self):
        self._contracts: set[str] = set()
        self._nulls: set[str] = set()
        self._egos: set[str] = set()

    @classmethod
    def from_file(cls, path) -> "AccountRegistry":
        reg = cls()
        try:
            with open(path, encoding="utf-8") as fh:
                entries = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise InputError(f"cannot read account registry {path}: {exc}") from exc
        for entry in entries:
            addr = entry.get("address", "")
            kind = entry.get("type", "address").lower()
            if kind not in ("ego", "address", "contract", "null"):
                raise InputError(f"unknown account type {kind!r} for {addr}")
            reg.add(addr, kind)
        return reg

    def add(self, address: str, kind: str) -> None:
        addr = address.lower()
        if kind == "contract":
            self._contracts.add(addr)
        elif kind == "null":
            self._nulls.add(addr)
        elif kind == "ego":
            self._egos.add(addr)

    def type_of(self, address: str, ego: str) -> str:
        if address == ego:
            return "E"
        addr = address.lower()
        if is_null_address(address) or addr in self._nulls:
            return "N"
        if addr in self._contracts:
            return "C"
        return "A"

    @property
    def egos(self) -> set[str]:
        return set(self._egos)


@dataclass
class LoadResult:
    transfers: list[TokenTransfer]
    rejects: list[tuple[int, str]] = field(default_factory=list)

    def reject_counts(self) -> dict[str, int]:
        return dict(Counter(reason for _, reason in self.rejects))


def load_transfers(path, registry: TokenRegistry, accounts: Optional[AccountRegistry] = None) -> LoadResult:
    """Read transfers.csv, validating rows and resolving token categories.

    Rejected rows carry (line_number, reason); reasons: malformed_row,
    missing_tx_hash, missing_account, self_transfer, bad_amount,
    negative_amount, bad_block.
    """
    transfers: list[TokenTransfer] = []
    rejects: list[tuple[int, str]] = []
    try:
        fh = open(path, encoding="utf-8", newline="")
    except OSError as exc:
        raise InputError(f"cannot read transfers file {path}: {exc}") from exc
    with fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header] != list(TRANSFER_COLUMNS):
            raise InputError(
                f"transfers file {path} must start with header {','.join(TRANSFER_COLUMNS)}"
            )
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(TRANSFER_COLUMNS):
                rejects.append((lineno, "malformed_row"))
                continue
            tx_hash, ego, src, dst, contract, symbol, amount_s, block_s = row
            if not tx_hash:
                rejects.append((lineno, "missing_tx_hash"))
                continue
            if not src or not dst or not ego:
                rejects.append((lineno, "missing_account"))
                continue
            if src == dst:
                rejects.append((lineno, "self_transfer"))
                continue
            try:
                amount = float(amount_s)
            except ValueError:
                rejects.append((lineno, "bad_amount"))
                continue
            if amount < 0 or amount != amount:
                rejects.append((lineno, "negative_amount"))
                continue
            try:
                block = int(block_s)
            except ValueError:
                rejects.append((lineno, "bad_block"))
                continue
            if block < 0:
                rejects.append((lineno, "bad_block"))
                continue
            tr = TokenTransfer(
                tx_hash=tx_hash,
                from_account=src,
                to_account=dst,
                token_symbol=symbol,
                token_contract=contract,
                amount=amount,
                block_number=block,
                ego_account=ego,
                category=registry.category(contract, symbol) or None,
            )
            if accounts is not None:
                tr.from_type = accounts.type_of(src, ego)
                tr.to_type = accounts.type_of(dst, ego)
            transfers.append(tr)
    return LoadResult(transfers, rejects)


def group_transactions(transfers: list[TokenTransfer]) -> list[Transaction]:
    """Partition transfers by (tx_hash, ego), preserving input order."""
    buckets: dict[tuple[str, str], Transaction] = {}
    for tr in transfers:
        key = (tr.tx_hash, tr.ego_account)
        tx = buckets.get(key)
        if tx is None:
            tx = Transaction(tx_hash=tr.tx_hash, ego_account=tr.ego_account, transfers=[])
            buckets[key] = tx
        tx.transfers.append(tr)
    return list(buckets.values())


def filter_spam(transactions: list[Transaction], registry: TokenRegistry) -> list[Transaction]:
    """Drop any transaction containing at least one spam-token transfer."""
    kept = []
    for tx in transactions:
        if any(registry.is_spam(tr.token_contract, tr.token_symbol) for tr in tx.transfers):
            continue
        if tx.transfers:
            kept.append(tx)
    return kept


def load_method_mapping(path) -> dict[str, str]:
    """Read {raw method name -> group}. Conflicting duplicates are fatal.

    Lookup is case-insensitive: keys are normalized with casefold, and two
    raw names that collide after normalization must agree on the group.
    """
    try:
        with open(path, encoding="utf-8") as fh:
            raw = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise InputError(f"cannot read method mapping {path}: {exc}") from exc
    mapping: dict[str, str] = {}
    for name, group in raw.items():
        key = name.strip().casefold()
        resolved = GROUP_ALIASES.get(group, group)
        if resolved not in METHOD_GROUPS and resolved not in EXCLUDED_GROUPS:
            raise InputError(f"method mapping {path}: unknown group {group!r} for {name!r}")
        if key in mapping and mapping[key] != resolved:
            raise InputError(
                f"method mapping {path}: conflicting groups for {name!r} "
                f"({mapping[key]} vs {resolved})"
            )
        mapping[key] = resolved
    return mapping


def load_method_labels(path) -> list[MethodLabel]:
    """Read methods.csv (tx_hash,raw_method)."""
    labels = []
    try:
        fh = open(path, encoding="utf-8", newline="")
    except OSError as exc:
        raise InputError(f"cannot read methods file {path}: {exc}") from exc
    with fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header][:2] != ["tx_hash", "raw_method"]:
            raise InputError(f"methods file {path} must start with header tx_hash,raw_method")
        for row in reader:
            if len(row) >= 2 and row[0]:
                labels.append(MethodLabel(tx_hash=row[0], raw_method=row[1]))
    return labels


def group_methods(labels: list[MethodLabel], mapping: dict[str, str]) -> list[MethodLabel]:
    """Resolve raw method names to the eight retained groups.

    Excluded groups (Exit, Burn, Stake) and unmapped names resolve to
    Unknown; merged groups go through their alias (Exchange -> Swap,
    Redeem -> Withdraw).
    """
    for label in labels:
        group = mapping.get(label.raw_method.strip().casefold())
        if group is None or group in EXCLUDED_GROUPS:
            label.method_group = UNKNOWN
        else:
            label.method_group = group
    return labels


def attach_methods(transactions: list[Transaction], labels: list[MethodLabel]) -> None:
    """Set method_group on transactions by tx_hash join. Unlabeled stay None."""
    by_hash = {lab.tx_hash: lab.method_group for lab in labels}
    for tx in transactions:
        group = by_hash.get(tx.tx_hash)
        if group is not None:
            tx.method_group = group
