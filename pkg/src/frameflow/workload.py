"""Seeded transfer workload generation with a skewed sender distribution.

Accounts are the integers [0, total); address bytes are the 48-bit big-endian
encoding, so lexicographic address order is numeric order and "the first
gamma addresses" is simply [0, gamma). A sender is drawn from that hot range
with probability alpha, otherwise (and for every receiver) uniformly from the
cold range [gamma, total). Records are fixed 24-byte rows so a workload file
is seekable and the analysis stage can be handed raw byte slices.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, replace
from functools import lru_cache

import numpy as np

from frameflow.engine import balance_key, token_key
from frameflow.model import Kind, MalformedTransaction, Transaction, TransferOp

RECORD_SIZE = 24
MAX_AMOUNT = 1 << 20
DEFAULT_BATCH = 1 << 14

_FILE_MAGIC = b"FFWL0001"
_HEADER = struct.Struct(">8sBdQQQQQ")


@dataclass(frozen=True)
class WorkloadSpec:
    kind: Kind
    total_accounts: int
    gamma: int
    alpha: float
    txn_count: int
    seed: int
    batch_size: int = DEFAULT_BATCH

    def validate(self) -> None:
        if self.total_accounts < 2:
            raise ValueError("need at least 2 accounts")
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError(f"alpha must be in [0, 1], got {self.alpha}")
        if self.alpha > 0 and self.gamma < 1:
            raise ValueError("alpha > 0 requires a nonempty hot range")
        if not 0 <= self.gamma <= self.total_accounts - 2:
            raise ValueError(
                "gamma must leave a cold range of at least 2 accounts "
                f"(gamma={self.gamma}, total={self.total_accounts})"
            )
        if self.txn_count < 1:
            raise ValueError("txn_count must be positive")
        if self.batch_size < 1:
            raise ValueError("batch_size must be positive")
        if self.kind not in (Kind.NATIVE, Kind.ERC20):
            raise ValueError(f"unknown kind {self.kind!r}")


def _batch_rng(spec: WorkloadSpec, batch_idx: int) -> np.random.Generator:
    # Each batch gets an independent child stream, so batch_size changes the
    # sample while any fixed (seed, batch_size) pair is fully reproducible.
    ss = np.random.SeedSequence(spec.seed, spawn_key=(batch_idx,))
    return np.random.Generator(np.random.PCG64(ss))


def _generate_batch(spec: WorkloadSpec, batch_idx: int, n: int) -> np.ndarray:
    rng = _batch_rng(spec, batch_idx)
    total, gamma = spec.total_accounts, spec.gamma
    cold = rng.integers(gamma, total, size=n, dtype=np.uint64)
    if spec.alpha > 0:
        hot = rng.random(n) < spec.alpha
        hot_senders = rng.integers(0, gamma, size=n, dtype=np.uint64)
        senders = np.where(hot, hot_senders, cold)
    else:
        senders = cold
    receivers = rng.integers(gamma, total, size=n, dtype=np.uint64)
    # Self-transfers are malformed; bump colliding receivers to the next cold
    # account (wrapping), which keeps the draw deterministic.
    span = np.uint64(total - gamma)
    clash = receivers == senders
    if clash.any():
        receivers = np.where(
            clash, np.uint64(gamma) + (receivers - np.uint64(gamma) + np.uint64(1)) % span, receivers
        )
    amounts = rng.integers(1, MAX_AMOUNT + 1, size=n, dtype=np.uint64)

    rows = np.zeros((n, RECORD_SIZE), dtype=np.uint8)
    for b in range(6):
        shift = np.uint64(8 * (5 - b))
        rows[:, b] = (senders >> shift).astype(np.uint8)
        rows[:, 6 + b] = (receivers >> shift).astype(np.uint8)
    for b in range(8):  # amount occupies a 10-byte field; top 2 bytes stay 0
        rows[:, 14 + b] = (amounts >> np.uint64(8 * (7 - b))).astype(np.uint8)
    rows[:, 22] = int(spec.kind)
    return rows


def generate_records(spec: WorkloadSpec) -> bytes:
    """The full workload as txn_count packed 24-byte records."""
    spec.validate()
    chunks = []
    remaining = spec.txn_count
    batch_idx = 0
    while remaining > 0:
        n = min(spec.batch_size, remaining)
        chunks.append(_generate_batch(spec, batch_idx, n).tobytes())
        remaining -= n
        batch_idx += 1
    return b"".join(chunks)


def encode_record(op: TransferOp) -> bytes:
    op.validate()
    if op.amount >= 1 << 80:
        raise MalformedTransaction(f"amount {op.amount} exceeds the 10-byte field")
    return (
        op.sender.to_bytes(6, "big")
        + op.receiver.to_bytes(6, "big")
        + op.amount.to_bytes(10, "big")
        + bytes((int(op.kind), 0))
    )


def decode_record(raw: bytes) -> TransferOp:
    """Parse one record; raises MalformedTransaction on any structural fault."""
    if len(raw) != RECORD_SIZE:
        raise MalformedTransaction(f"record must be {RECORD_SIZE} bytes, got {len(raw)}")
    kind_byte = raw[22]
    if kind_byte not in (int(Kind.NATIVE), int(Kind.ERC20)):
        raise MalformedTransaction(f"unknown kind byte {kind_byte}")
    if raw[23] != 0:
        raise MalformedTransaction("reserved byte must be zero")
    op = TransferOp(
        kind=Kind(kind_byte),
        sender=int.from_bytes(raw[0:6], "big"),
        receiver=int.from_bytes(raw[6:12], "big"),
        amount=int.from_bytes(raw[12:22], "big"),
    )
    op.validate()
    return op


def generate(spec: WorkloadSpec) -> list[Transaction]:
    """Decoded workload with mempool arrival ids 0..txn_count-1."""
    blob = generate_records(spec)
    return [
        Transaction(id=i, op=decode_record(blob[i * RECORD_SIZE : (i + 1) * RECORD_SIZE]))
        for i in range(spec.txn_count)
    ]


# -- prefunding and the slot universe --------------------------------------


def initial_funding(spec: WorkloadSpec) -> int:
    """Per-slot prefund. No account can be overdrawn below zero and no slot
    can overflow 63 bits: every transfer moves at most MAX_AMOUNT, so any
    balance stays within [0, funding + txn_count * MAX_AMOUNT]."""
    return spec.txn_count * MAX_AMOUNT


@lru_cache(maxsize=8)
def _state_keys_cached(kind: Kind, total_accounts: int) -> np.ndarray:
    accounts = range(total_accounts)
    keys = [balance_key(a) for a in accounts]
    if kind == Kind.ERC20:
        keys.extend(token_key(a) for a in accounts)
    arr = np.sort(np.array(keys, dtype=np.uint64))
    if arr.size > 1 and (arr[1:] == arr[:-1]).any():
        raise RuntimeError("storage key collision in slot universe")
    return arr


def state_keys(spec: WorkloadSpec) -> np.ndarray:
    """Sorted slot universe the workload can touch: a balance slot per
    account, plus a token slot per account for ERC20. Treat as read-only."""
    return _state_keys_cached(spec.kind, spec.total_accounts)


def prefunded_store(spec: WorkloadSpec):
    from frameflow.engine import StateStore

    return StateStore(base_keys=state_keys(spec), base_value=initial_funding(spec))


# -- workload files ---------------------------------------------------------


def write_workload(path, spec: WorkloadSpec, records: bytes | None = None) -> int:
    spec.validate()
    if records is None:
        records = generate_records(spec)
    expect = spec.txn_count * RECORD_SIZE
    if len(records) != expect:
        raise ValueError(f"records length {len(records)} != {expect}")
    with open(path, "wb") as fh:
        fh.write(
            _HEADER.pack(
                _FILE_MAGIC,
                int(spec.kind),
                spec.alpha,
                spec.gamma,
                spec.total_accounts,
                spec.txn_count,
                spec.seed,
                spec.batch_size,
            )
        )
        fh.write(records)
    return len(records)


def read_workload(path) -> tuple[WorkloadSpec, bytes]:
    with open(path, "rb") as fh:
        head = fh.read(_HEADER.size)
        if len(head) != _HEADER.size:
            raise ValueError(f"{path}: truncated workload header")
        magic, kind, alpha, gamma, total, count, seed, batch = _HEADER.unpack(head)
        if magic != _FILE_MAGIC:
            raise ValueError(f"{path}: not a workload file")
        spec = WorkloadSpec(
            kind=Kind(kind),
            total_accounts=total,
            gamma=gamma,
            alpha=alpha,
            txn_count=count,
            seed=seed,
            batch_size=batch,
        )
        spec.validate()
        records = fh.read()
    if len(records) != count * RECORD_SIZE:
        raise ValueError(f"{path}: expected {count} records, file is short or long")
    return spec, records


def hot_sender_fraction(records: bytes, gamma: int) -> float:
    """Fraction of records whose sender lies in the hot range [0, gamma)."""
    rows = np.frombuffer(records, dtype=np.uint8).reshape(-1, RECORD_SIZE)
    senders = np.zeros(len(rows), dtype=np.uint64)
    for b in range(6):
        senders = (senders << np.uint64(8)) | rows[:, b].astype(np.uint64)
    return float((senders < gamma).mean()) if len(rows) else 0.0
