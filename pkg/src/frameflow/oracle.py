"""Brute-force ground truth: serial execution, exact precedence graphs,
exact TLP, and schedule-trace checking.

Everything here stays deliberately simple and single-threaded. The only code
shared with the pipeline is the core model, the single-txn interpreter, and
the leaf/node hash functions (roots could not be compared otherwise); state
bookkeeping and tree construction are written independently.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from frameflow.commit import merkle_root
from frameflow.engine import ExecStatus, execute
from frameflow.model import RWSet, Transaction, conflicts

EXACT_INSTANCE_CAP = 10_000


class OracleStore:
    """Plain dict overlay over a sorted prefunded key array; an independent
    reimplementation of the state semantics, on purpose."""

    def __init__(self, base_keys: np.ndarray | None, base_value: int):
        self._base_keys = (
            np.ascontiguousarray(base_keys, dtype=np.uint64)
            if base_keys is not None
            else np.empty(0, dtype=np.uint64)
        )
        self._base_value = base_value
        self._overlay: dict[int, int] = {}

    def _base_has(self, key: int) -> bool:
        kb = self._base_keys
        i = int(np.searchsorted(kb, np.uint64(key)))
        return i < kb.size and int(kb[i]) == key

    def get(self, key: int) -> int:
        if key in self._overlay:
            return self._overlay[key]
        return self._base_value if self._base_has(key) else 0

    def set(self, key: int, value: int) -> None:
        self._overlay[key] = value

    def items_sorted(self):
        overlay = self._overlay
        extras = sorted(k for k in overlay if not self._base_has(k))
        out = []
        ei = 0
        for bk in self._base_keys.tolist():
            while ei < len(extras) and extras[ei] < bk:
                out.append((extras[ei], overlay[extras[ei]]))
                ei += 1
            out.append((bk, overlay.get(bk, self._base_value)))
        while ei < len(extras):
            out.append((extras[ei], overlay[extras[ei]]))
            ei += 1
        return out

    def root(self) -> bytes:
        return merkle_root(self.items_sorted())


def serial_execute(txns, base_keys, base_value):
    """Execute txns one-by-one in the given order on a fresh store.

    Returns (store, root, statuses). This is the definition of correct
    results for the parallel pipeline on its kept sequence.
    """
    store = OracleStore(base_keys, base_value)
    statuses: list[ExecStatus] = []
    for txn in txns:
        statuses.append(execute(txn, store, persist=True).status)
    return store, store.root(), statuses


def exact_precedence_graph(rws: list[RWSet]):
    """Full pairwise conflict edge set (i -> j for i < j), no transitive
    reduction. O(n^2); capped to small instances."""
    n = len(rws)
    if n > EXACT_INSTANCE_CAP:
        raise ValueError(f"instance of {n} txns exceeds exact-graph cap")
    edges = []
    for j in range(n):
        rj = rws[j]
        for i in range(j):
            if conflicts(rws[i], rj):
                edges.append((i, j))
    return edges


def critical_path_length(rws: list[RWSet]) -> int:
    """Longest conflict chain respecting list order, via per-key running
    depth maxima; O(n * keys) so it scales past the pairwise cap."""
    max_writer_depth: dict[int, int] = {}
    max_reader_depth: dict[int, int] = {}
    longest = 0
    for rw in rws:
        depth = 1
        for key in rw.writes:
            d = max_writer_depth.get(key, 0)
            if d >= depth:
                depth = d + 1
            d = max_reader_depth.get(key, 0)
            if d >= depth:
                depth = d + 1
        for key in rw.reads:
            if key in rw.writes:
                continue
            d = max_writer_depth.get(key, 0)
            if d >= depth:
                depth = d + 1
        for key in rw.writes:
            if max_writer_depth.get(key, 0) < depth:
                max_writer_depth[key] = depth
        for key in rw.reads:
            if key in rw.writes:
                continue
            if max_reader_depth.get(key, 0) < depth:
                max_reader_depth[key] = depth
        if depth > longest:
            longest = depth
    return longest


def longest_path_from_edges(n: int, edges) -> int:
    """Independent longest-path computation over explicit edges, used to
    cross-check critical_path_length on small instances."""
    depth = [1] * n
    for i, j in sorted(edges, key=lambda e: e[1]):
        if depth[i] + 1 > depth[j]:
            depth[j] = depth[i] + 1
    return max(depth, default=0)


def exact_tlp(rws: list[RWSet]) -> float:
    """Intrinsic max TLP of the stream under order-respecting schedules:
    txn count over the exact critical path."""
    if not rws:
        return 0.0
    return len(rws) / max(1, critical_path_length(rws))


@dataclass
class Violation:
    first_seq: int
    second_seq: int
    key: int
    reason: str


def check_schedule(entries) -> Violation | None:
    """Verify a recorded schedule is conflict-serializable in exec_seq order.

    entries: objects with exec_seq, reads, writes, start_ns, end_ns (actual
    sets). For every conflicting pair the later txn must start after the
    earlier finishes; checked with per-key running maxima in O(touches).
    Returns the first violation or None.
    """
    last_write_end: dict[int, tuple[int, int]] = {}
    last_touch_end: dict[int, tuple[int, int]] = {}
    for e in sorted(entries, key=lambda e: e.exec_seq):
        if e.end_ns <= e.start_ns:
            return Violation(e.exec_seq, e.exec_seq, -1, "non-positive interval")
        writes = set(e.writes)
        for key in writes:
            prev = last_touch_end.get(key)
            if prev is not None and e.start_ns < prev[1]:
                return Violation(
                    prev[0], e.exec_seq, key, "write overlapped earlier access"
                )
        for key in e.reads:
            if key in writes:
                continue
            prev = last_write_end.get(key)
            if prev is not None and e.start_ns < prev[1]:
                return Violation(
                    prev[0], e.exec_seq, key, "read overlapped earlier write"
                )
        for key in writes:
            cur = (e.exec_seq, e.end_ns)
            prev = last_write_end.get(key)
            if prev is None or e.end_ns > prev[1]:
                last_write_end[key] = cur
            prev = last_touch_end.get(key)
            if prev is None or e.end_ns > prev[1]:
                last_touch_end[key] = cur
        for key in e.reads:
            if key in writes:
                continue
            prev = last_touch_end.get(key)
            if prev is None or e.end_ns > prev[1]:
                last_touch_end[key] = (e.exec_seq, e.end_ns)
    return None
