"""Core data model: storage keys, read/write sets, transfer transactions."""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import IntEnum

KEY_BYTES = 8
ACCOUNT_BYTES = 6
MAX_ACCOUNT = (1 << (8 * ACCOUNT_BYTES)) - 1

# Values live in uint64 storage slots; the generator's funding bound keeps
# every reachable balance far below this, and the dense store asserts it.
MAX_SLOT_VALUE = (1 << 63) - 1


class Kind(IntEnum):
    """Transfer flavor. NATIVE touches 2 balance slots, ERC20 touches 3."""

    NATIVE = 0
    ERC20 = 1


def key_to_bytes(key: int) -> bytes:
    """Storage key as 8 big-endian bytes (byte order matches numeric order)."""
    return key.to_bytes(KEY_BYTES, "big")


def key_from_bytes(raw: bytes) -> int:
    if len(raw) != KEY_BYTES:
        raise ValueError(f"storage key must be {KEY_BYTES} bytes, got {len(raw)}")
    return int.from_bytes(raw, "big")


@dataclass(frozen=True, slots=True)
class RWSet:
    """Approximate or actual footprint of one transaction.

    reads holds keys only read; a key both read and written belongs in both
    sets (the conflict predicate treats writes as dominant).
    """

    reads: frozenset[int]
    writes: frozenset[int]

    @staticmethod
    def of(reads=(), writes=()) -> "RWSet":
        return RWSet(frozenset(reads), frozenset(writes))

    @property
    def keys(self) -> frozenset[int]:
        return self.reads | self.writes

    @property
    def is_empty(self) -> bool:
        return not self.reads and not self.writes

    def issubset_of(self, other: "RWSet") -> bool:
        """True if every read is covered by other's keys and every write by
        other's writes. This is the one-sided over-approximation order: a
        schedule safe for `other` is safe for `self`."""
        return self.reads <= (other.reads | other.writes) and self.writes <= other.writes


def conflicts(a: RWSet, b: RWSet) -> bool:
    """Write/write, write/read, or read/write overlap. Read/read is free."""
    if a.writes & b.writes:
        return True
    if a.writes & b.reads:
        return True
    if a.reads & b.writes:
        return True
    return False


@dataclass(frozen=True, slots=True)
class TransferOp:
    """One value transfer. sender/receiver are 48-bit account ids."""

    kind: Kind
    sender: int
    receiver: int
    amount: int

    def validate(self) -> None:
        if self.kind not in (Kind.NATIVE, Kind.ERC20):
            raise MalformedTransaction(f"unknown kind {self.kind!r}")
        for label, acct in (("sender", self.sender), ("receiver", self.receiver)):
            if not 0 <= acct <= MAX_ACCOUNT:
                raise MalformedTransaction(f"{label} {acct} outside 48-bit range")
        if self.sender == self.receiver:
            raise MalformedTransaction("self-transfer is rejected as malformed")
        if self.amount < 0:
            raise MalformedTransaction(f"negative amount {self.amount}")


@dataclass(slots=True)
class Transaction:
    """A transfer plus scheduling annotations.

    id is the mempool arrival number and is unique per attempt: a dropped
    transaction re-enters the mempool under a fresh id with origin_id pointing
    at the first attempt. exec_seq is assigned when the scheduler ingests the
    frame holding the txn; it is the position in the canonical (frame-grouped)
    execution order, which is the order the serial oracle must replay.
    """

    id: int
    op: TransferOp
    approx_rw: RWSet | None = None
    exec_seq: int | None = None
    origin_id: int | None = None
    attempt: int = 0
    inject_divergence: bool = False

    def require_annotation(self) -> RWSet:
        if self.approx_rw is None:
            raise MissingAnnotation(f"txn {self.id} has no approximate RW set")
        return self.approx_rw


class MalformedTransaction(ValueError):
    pass


class MissingAnnotation(RuntimeError):
    pass
