"""Approximate read/write-set extraction by simulation against a snapshot.

Simulation runs the same interpreter as execution with a discarding write
sink, so for this VM the annotation is exact unless execution itself is
forced to diverge. Batch analysis can fan out over a process pool; footprints
of transfers are value-independent, so workers simulate against zero-filled
state and still produce the same annotation the snapshot route gives.
"""

from __future__ import annotations

import multiprocessing as mp
from dataclasses import dataclass

from frameflow.engine import interpret_op
from frameflow.model import MalformedTransaction, RWSet, Transaction
from frameflow.workload import RECORD_SIZE, decode_record


def analyze(txn: Transaction, view) -> RWSet:
    """Footprint of txn simulated against view (any object with get).

    Reads genuinely go through the view; writes are buffered and dropped.
    """
    txn.op.validate()
    reads: set[int] = set()
    writes: set[int] = set()
    buffered: dict[int, int] = {}

    def get(key: int) -> int:
        reads.add(key)
        return buffered[key] if key in buffered else view.get(key)

    def put(key: int, value: int) -> None:
        writes.add(key)
        buffered[key] = value

    interpret_op(txn.op, get, put)
    return RWSet(frozenset(reads), frozenset(writes))


def annotate(txn: Transaction, view) -> Transaction:
    txn.approx_rw = analyze(txn, view)
    return txn


def bypass_with_access_list(txn: Transaction, declared: RWSet) -> Transaction:
    """Annotate from a caller-declared access list, skipping simulation. The
    declaration is trusted here; a dishonest one is caught at execution by
    the divergence check."""
    if declared.is_empty:
        raise ValueError(f"txn {txn.id}: declared access list is empty")
    txn.approx_rw = declared
    return txn


@dataclass(frozen=True)
class AnalyzeError:
    index: int
    txn_id: int
    reason: str


def analyze_batch(txns, view, pool: "AnalyzePool | None" = None):
    """Annotate a batch; returns (annotated list, errors list). Malformed
    txns are excluded from the annotated list, not raised. Order preserved."""
    if pool is not None and pool.processes > 1:
        return pool.annotate_txns(txns)
    annotated: list[Transaction] = []
    errors: list[AnalyzeError] = []
    for i, txn in enumerate(txns):
        try:
            annotated.append(annotate(txn, view))
        except MalformedTransaction as exc:
            errors.append(AnalyzeError(i, txn.id, str(exc)))
    return annotated, errors


# -- record-level parallel path --------------------------------------------
#
# The pipeline hands workers raw (id, record) pairs instead of objects: a
# 24-byte slice pickles far cheaper than a Transaction, and decode + simulate
# is the same code path used everywhere else.


def _analyze_record_chunk(chunk):
    out = []
    for txn_id, record in chunk:
        try:
            op = decode_record(record)
            rw = analyze(Transaction(id=txn_id, op=op), _ZERO_VIEW)
            out.append(
                (
                    txn_id,
                    int(op.kind),
                    op.sender,
                    op.receiver,
                    op.amount,
                    tuple(sorted(rw.reads)),
                    tuple(sorted(rw.writes)),
                )
            )
        except MalformedTransaction as exc:
            out.append((txn_id, str(exc)))
    return out


class _ZeroView:
    @staticmethod
    def get(key: int) -> int:
        return 0


_ZERO_VIEW = _ZeroView()


class AnalyzePool:
    """Process pool for record analysis; degenerates to in-process work at
    processes=1 through the same chunk function."""

    def __init__(self, processes: int = 1):
        if processes < 1:
            raise ValueError("processes must be >= 1")
        self.processes = processes
        self._pool = (
            mp.get_context("fork").Pool(processes) if processes > 1 else None
        )

    def analyze_records(self, entries):
        """entries: sequence of (txn_id, 24-byte record). Returns results in
        input order: ok tuples (id, kind, sender, receiver, amount, reads,
        writes) or error tuples (id, reason)."""
        entries = list(entries)
        for _, record in entries:
            if len(record) != RECORD_SIZE:
                raise ValueError("analyze_records expects fixed 24-byte records")
        if self._pool is None:
            return _analyze_record_chunk(entries)
        n_chunks = max(1, min(len(entries), self.processes * 4))
        step = (len(entries) + n_chunks - 1) // n_chunks
        chunks = [entries[i : i + step] for i in range(0, len(entries), step)]
        out = []
        for part in self._pool.map(_analyze_record_chunk, chunks):
            out.extend(part)
        return out

    def annotate_txns(self, txns):
        """Object-level fan-out used by analyze_batch: round-trips through
        the record encoding so workers stay record-based."""
        from frameflow.workload import encode_record

        entries = []
        malformed: dict[int, AnalyzeError] = {}
        for i, txn in enumerate(txns):
            try:
                entries.append((txn.id, encode_record(txn.op)))
            except MalformedTransaction as exc:
                malformed[i] = AnalyzeError(i, txn.id, str(exc))
        results = iter(self.analyze_records(entries))
        annotated: list[Transaction] = []
        errors: list[AnalyzeError] = []
        for i, txn in enumerate(txns):
            if i in malformed:
                errors.append(malformed[i])
                continue
            res = next(results)
            if len(res) == 2:
                errors.append(AnalyzeError(i, txn.id, res[1]))
                continue
            _, _, _, _, _, reads, writes = res
            txn.approx_rw = RWSet(frozenset(reads), frozenset(writes))
            annotated.append(txn)
        return annotated, errors

    def close(self) -> None:
        if self._pool is not None:
            self._pool.close()
            self._pool.join()
            self._pool = None

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()
