"""Transfer VM: storage key derivation, the interpreter, and state stores.

There is exactly one interpreter (interpret_op). The approximate-analysis
stage, the inline executor, the worker processes, and the serial oracle all
run it; they differ only in the get/put callables they hand it. That is what
makes "actual rw set equals approximate rw set for honest txns" a structural
property instead of a coincidence.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass
from enum import IntEnum

import numpy as np

from frameflow.model import ACCOUNT_BYTES, MAX_SLOT_VALUE, Kind, RWSet, Transaction, TransferOp

_BAL_TAG = b"bal\x00"
_TOK_TAG = b"tok\x00"


def _derive(tag: bytes, account: int) -> int:
    h = hashlib.blake2b(
        tag + account.to_bytes(ACCOUNT_BYTES, "big"), digest_size=8
    ).digest()
    return int.from_bytes(h, "big")


def balance_key(account: int) -> int:
    """Native balance slot for an account (64-bit key)."""
    return _derive(_BAL_TAG, account)


def token_key(account: int) -> int:
    """Token balance slot for an account."""
    return _derive(_TOK_TAG, account)


class ExecStatus(IntEnum):
    OK = 0
    INSUFFICIENT = 1  # funds short; balances re-written unchanged
    DROPPED = 2  # actual rw escaped the approximation; no state effect
    FAILED = 3  # interpreter error; no state effect

    @property
    def kept(self) -> bool:
        return self in (ExecStatus.OK, ExecStatus.INSUFFICIENT)


def interpret_op(op: TransferOp, get, put) -> ExecStatus:
    """Run one transfer against get(key)->int / put(key, value).

    NATIVE moves native balance sender->receiver. ERC20 moves token balance
    and also re-writes the sender's native balance slot (the fee touch),
    value unchanged. An underfunded transfer re-writes every balance it would
    have written, unchanged, so the touched footprint does not depend on
    account balances.
    """
    if op.kind == Kind.NATIVE:
        bs, br = balance_key(op.sender), balance_key(op.receiver)
        vs, vr = get(bs), get(br)
        if vs >= op.amount:
            put(bs, vs - op.amount)
            put(br, vr + op.amount)
            return ExecStatus.OK
        put(bs, vs)
        put(br, vr)
        return ExecStatus.INSUFFICIENT
    if op.kind == Kind.ERC20:
        b = balance_key(op.sender)
        ts, tr = token_key(op.sender), token_key(op.receiver)
        vb, vts, vtr = get(b), get(ts), get(tr)
        if vts >= op.amount:
            put(b, vb)
            put(ts, vts - op.amount)
            put(tr, vtr + op.amount)
            return ExecStatus.OK
        put(b, vb)
        put(ts, vts)
        put(tr, vtr)
        return ExecStatus.INSUFFICIENT
    raise ValueError(f"unknown kind {op.kind!r}")


def op_rw(op: TransferOp) -> RWSet:
    """Footprint of op, derived by running the interpreter against a
    recording sink (no state consulted, no state touched)."""
    reads: set[int] = set()
    writes: set[int] = set()

    def get(key: int) -> int:
        reads.add(key)
        return 0

    def put(key: int, value: int) -> None:
        writes.add(key)

    interpret_op(op, get, put)
    return RWSet(frozenset(reads), frozenset(writes))


@dataclass
class ExecResult:
    status: ExecStatus
    actual_rw: RWSet


def execute(txn: Transaction, store, persist: bool = True) -> ExecResult:
    """Execute one txn against a store with get/set. With persist=False all
    writes are discarded (used for pure analysis runs).

    A txn flagged inject_divergence performs one extra read of a key outside
    any honest footprint; it exists so tests can force actual != approximate.
    """
    reads: set[int] = set()
    writes: set[int] = set()
    buffered: dict[int, int] = {}

    def get(key: int) -> int:
        reads.add(key)
        if key in buffered:
            return buffered[key]
        return store.get(key)

    def put(key: int, value: int) -> None:
        writes.add(key)
        buffered[key] = value

    if txn.inject_divergence:
        get(divergence_probe_key(txn.id))
    status = interpret_op(txn.op, get, put)
    if persist:
        for key, value in buffered.items():
            store.set(key, value)
    return ExecResult(status, RWSet(frozenset(reads), frozenset(writes)))


def divergence_probe_key(txn_id: int) -> int:
    """A synthetic key no transfer footprint contains (distinct tag space)."""
    return _derive(b"divergent\x00", txn_id & 0xFFFFFFFFFFFF)


class StateStore:
    """Key/value state: a dict overlay over an optional dense base.

    The base is a sorted array of keys sharing one initial value; it stands in
    for "every account was prefunded" without materializing a giant dict.
    Reads of unknown keys return 0, matching an untouched storage slot.
    """

    __slots__ = ("_overlay", "_base_keys", "_base_value", "version")

    def __init__(self, base_keys: np.ndarray | None = None, base_value: int = 0):
        if base_keys is not None:
            base_keys = np.ascontiguousarray(base_keys, dtype=np.uint64)
            if base_keys.size > 1 and not (base_keys[1:] > base_keys[:-1]).all():
                raise ValueError("base_keys must be strictly increasing")
        self._overlay: dict[int, int] = {}
        self._base_keys = base_keys
        self._base_value = base_value
        self.version = 0

    @classmethod
    def from_items(cls, items: dict[int, int]) -> "StateStore":
        s = cls()
        s._overlay = dict(items)
        return s

    def _in_base(self, key: int) -> bool:
        kb = self._base_keys
        if kb is None or kb.size == 0:
            return False
        i = int(np.searchsorted(kb, np.uint64(key)))
        return i < kb.size and int(kb[i]) == key

    def get(self, key: int) -> int:
        v = self._overlay.get(key)
        if v is not None:
            return v
        if self._in_base(key):
            return self._base_value
        return 0

    def set(self, key: int, value: int) -> None:
        if value < 0:
            raise ValueError(f"negative slot value {value} for key {key}")
        self._overlay[key] = value
        self.version += 1

    def items_sorted(self):
        """All (key, value) pairs with a defined slot, ascending by key."""
        extra = sorted(k for k in self._overlay if not self._in_base(k))
        base_iter = iter(self._base_keys.tolist() if self._base_keys is not None else ())
        merged: list[tuple[int, int]] = []
        ei = 0
        for bk in base_iter:
            while ei < len(extra) and extra[ei] < bk:
                merged.append((extra[ei], self._overlay[extra[ei]]))
                ei += 1
            merged.append((bk, self._overlay.get(bk, self._base_value)))
        while ei < len(extra):
            merged.append((extra[ei], self._overlay[extra[ei]]))
            ei += 1
        return merged

    @property
    def slot_count(self) -> int:
        base = self._base_keys.size if self._base_keys is not None else 0
        extra = sum(1 for k in self._overlay if not self._in_base(k))
        return base + extra


class SnapshotView:
    """Read-only view pinned to a store version; any read after the store
    moved on raises, which keeps the analysis stage honest about purity."""

    __slots__ = ("_store", "_version")

    def __init__(self, store: StateStore):
        self._store = store
        self._version = store.version

    def get(self, key: int) -> int:
        if self._store.version != self._version:
            raise StaleSnapshot(
                f"store moved from version {self._version} to {self._store.version}"
            )
        return self._store.get(key)


class NullSnapshot:
    """Zero-filled state; enough for transfers, whose footprint is
    value-independent."""

    @staticmethod
    def get(key: int) -> int:
        return 0


class StaleSnapshot(RuntimeError):
    pass


# -- state snapshot files -------------------------------------------------

_SNAP_MAGIC = b"FFSTATE1"


def save_state(store, path) -> int:
    """Flat binary snapshot: magic, count, then (key u64 be, value u64 be)
    sorted by key. Returns the number of records."""
    items = store.items_sorted() if hasattr(store, "items_sorted") else sorted(store.items())
    with open(path, "wb") as fh:
        fh.write(_SNAP_MAGIC)
        fh.write(len(items).to_bytes(8, "big"))
        for key, value in items:
            if value > MAX_SLOT_VALUE:
                raise ValueError(f"value {value} exceeds slot range")
            fh.write(key.to_bytes(8, "big"))
            fh.write(value.to_bytes(8, "big"))
    return len(items)


def load_state(path) -> StateStore:
    with open(path, "rb") as fh:
        if fh.read(8) != _SNAP_MAGIC:
            raise ValueError(f"{path} is not a state snapshot")
        count = int.from_bytes(fh.read(8), "big")
        items: dict[int, int] = {}
        prev = -1
        for _ in range(count):
            rec = fh.read(16)
            if len(rec) != 16:
                raise ValueError("truncated state snapshot")
            key = int.from_bytes(rec[:8], "big")
            if key <= prev:
                raise ValueError("state snapshot keys not strictly increasing")
            prev = key
            items[key] = int.from_bytes(rec[8:], "big")
    return StateStore.from_items(items)
