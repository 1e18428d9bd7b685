"""Conflict-DAG scheduling of the frame stream.

Per storage slot the scheduler keeps only the chain tail: the latest writer
and the readers seen since that writer. A new reader waits on the latest
writer; a new writer waits on all readers since the latest writer, or on that
writer when no reader intervened. Write-after-read edges are enforced even
though the nearest-predecessor rule alone would omit them: without them two
schedules of reader/writer pairs could commute, which breaks equivalence to
the frame-grouped serial order.

Frames arrive in frame_seq order and each txn gets exec_seq, its position in
the canonical (frame-grouped) stream. All correctness statements are about
exec_seq order; arrival ids are bookkeeping. Chains persist across block
windows, so the measured critical path is the path of the whole run.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field

from frameflow.engine import ExecStatus
from frameflow.framer import Frame
from frameflow.model import RWSet, Transaction


class OutOfOrderFrame(RuntimeError):
    pass


class LivenessError(RuntimeError):
    pass


@dataclass
class TraceEntry:
    txn_id: int
    origin_id: int | None
    attempt: int
    exec_seq: int
    frame_seq: int
    status: ExecStatus
    reads: tuple[int, ...]
    writes: tuple[int, ...]
    start_ns: int
    end_ns: int
    worker: int

    @property
    def kept(self) -> bool:
        return self.status.kept

    @property
    def actual_rw(self) -> RWSet:
        return RWSet(frozenset(self.reads), frozenset(self.writes))


class _Node:
    __slots__ = (
        "txn",
        "exec_seq",
        "frame_seq",
        "pending",
        "succs",
        "depth",
        "status",
        "dispatched",
        "entry",
    )

    def __init__(self, txn: Transaction, exec_seq: int, frame_seq: int):
        self.txn = txn
        self.exec_seq = exec_seq
        self.frame_seq = frame_seq
        self.pending = 0
        self.succs: list[_Node] = []
        self.depth = 1
        self.status: ExecStatus | None = None
        self.dispatched = False
        self.entry: TraceEntry | None = None

    @property
    def terminal(self) -> bool:
        return self.status is not None


class _Chain:
    __slots__ = ("writer", "readers")

    def __init__(self):
        self.writer: _Node | None = None
        self.readers: list[_Node] = []


@dataclass
class WindowResult:
    kept: list[TraceEntry]
    dropped: list[Transaction]
    failed: list[TraceEntry]


@dataclass
class ExecutionReport:
    executed: int
    kept: int
    ok: int
    insufficient: int
    dropped: int
    failed: int
    critical_path: int
    trace: list[TraceEntry]

    @property
    def measured_tlp(self) -> float:
        return measured_tlp(self)


def measured_tlp(report: ExecutionReport) -> float:
    """Executed txns divided by the longest enforced dependency chain; the
    schedule's intrinsic parallelism, independent of worker count."""
    if report.executed == 0:
        return 0.0
    return report.executed / max(1, report.critical_path)


class Scheduler:
    def __init__(self, executor, trace: bool = True):
        self.executor = executor
        self.chains: dict[int, _Chain] = {}
        self.ready: deque[_Node] = deque()
        self.inflight: dict[int, _Node] = {}
        self.trace_enabled = trace
        self.trace: list[TraceEntry] = []
        self.critical_path = 0
        self.next_exec_seq = 0
        self._last_frame_seq = -1
        self._ingested = 0
        self._terminal = 0
        self._counts = dict.fromkeys(ExecStatus, 0)
        self._window_kept: list[TraceEntry] = []
        self._window_dropped: list[Transaction] = []
        self._window_failed: list[TraceEntry] = []

    # -- ingest ----------------------------------------------------------

    def ingest_frame(self, frame: Frame) -> None:
        """Add a frame's txns to the slot chains and ready queue. Frames must
        arrive in frame_seq order; intra-frame pairs never gain edges (they
        were packed as conflict-free)."""
        if frame.frame_seq <= self._last_frame_seq:
            raise OutOfOrderFrame(
                f"frame {frame.frame_seq} after {self._last_frame_seq}"
            )
        self._last_frame_seq = frame.frame_seq
        for txn in frame.txns:
            self._ingest_txn(txn, frame.frame_seq)

    def _ingest_txn(self, txn: Transaction, frame_seq: int) -> None:
        rw = txn.require_annotation()
        node = _Node(txn, self.next_exec_seq, frame_seq)
        txn.exec_seq = node.exec_seq
        self.next_exec_seq += 1
        self._ingested += 1

        preds: dict[int, _Node] = {}
        chains = self.chains
        for key in rw.writes:
            chain = chains.get(key)
            if chain is None:
                continue
            if chain.readers:
                for r in chain.readers:
                    preds[r.exec_seq] = r
            elif chain.writer is not None:
                preds[chain.writer.exec_seq] = chain.writer
        for key in rw.reads:
            if key in rw.writes:
                continue
            chain = chains.get(key)
            if chain is not None and chain.writer is not None:
                preds[chain.writer.exec_seq] = chain.writer

        depth = 1
        pending = 0
        for p in preds.values():
            # A same-frame edge would mean the framer emitted a conflicting
            # frame; that is an upstream contract violation.
            assert p.frame_seq < frame_seq, "conflicting txns share a frame"
            if p.depth + 1 > depth:
                depth = p.depth + 1
            if not p.terminal:
                p.succs.append(node)
                pending += 1
        node.depth = depth
        node.pending = pending
        if depth > self.critical_path:
            self.critical_path = depth

        for key in rw.writes:
            chain = chains.get(key)
            if chain is None:
                chain = chains[key] = _Chain()
            chain.writer = node
            chain.readers = []
        for key in rw.reads:
            if key in rw.writes:
                continue
            chain = chains.get(key)
            if chain is None:
                chain = chains[key] = _Chain()
            chain.readers.append(node)

        if pending == 0:
            self.ready.append(node)

    # -- dispatch/drain --------------------------------------------------

    def _encode(self, node: _Node) -> tuple:
        txn = node.txn
        rw = txn.approx_rw
        return (
            node.exec_seq,
            txn.id,
            int(txn.op.kind),
            txn.op.sender,
            txn.op.receiver,
            txn.op.amount,
            txn.attempt,
            txn.inject_divergence,
            tuple(sorted(rw.reads)),
            tuple(sorted(rw.writes)),
        )

    def _dispatch(self) -> bool:
        if not self.ready:
            return False
        batch = []
        while self.ready:
            node = self.ready.popleft()
            node.dispatched = True
            self.inflight[node.exec_seq] = node
            batch.append(self._encode(node))
        self.executor.submit(batch)
        return True

    def _complete(self, result: tuple) -> None:
        (seq, txn_id, status, reads, writes, start, end, worker) = result
        node = self.inflight.pop(seq)
        status = ExecStatus(status)
        node.status = status
        self._terminal += 1
        self._counts[status] += 1
        txn = node.txn
        entry = TraceEntry(
            txn_id=txn_id,
            origin_id=txn.origin_id,
            attempt=txn.attempt,
            exec_seq=seq,
            frame_seq=node.frame_seq,
            status=status,
            reads=reads,
            writes=writes,
            start_ns=start,
            end_ns=end,
            worker=worker,
        )
        node.entry = entry
        if self.trace_enabled:
            self.trace.append(entry)
        if status.kept:
            self._window_kept.append(entry)
        elif status == ExecStatus.DROPPED:
            self._window_dropped.append(txn)
        else:
            self._window_failed.append(entry)
        for succ in node.succs:
            succ.pending -= 1
            if succ.pending == 0 and not succ.dispatched:
                self.ready.append(succ)
        node.succs = []

    def drain(self) -> None:
        """Run until every ingested txn is terminal. Bounded wait per poll so
        a stuck executor surfaces as LivenessError instead of a hang."""
        while self._terminal < self._ingested:
            progressed = self._dispatch()
            must_block = not progressed
            if self.inflight:
                try:
                    results = self.executor.poll(block=must_block)
                except TimeoutError as exc:
                    raise LivenessError(str(exc)) from exc
                for r in results:
                    self._complete(r)
            elif not progressed:
                raise LivenessError(
                    f"{self._ingested - self._terminal} txns unreachable: "
                    "nothing ready, nothing in flight"
                )

    def finish_window(self) -> WindowResult:
        """Collect the window's outcomes at a quiescent barrier."""
        if self.inflight or self.ready:
            raise RuntimeError("finish_window before quiescence")
        kept = sorted(self._window_kept, key=lambda e: e.exec_seq)
        out = WindowResult(kept, list(self._window_dropped), list(self._window_failed))
        self._window_kept = []
        self._window_dropped = []
        self._window_failed = []
        return out

    # -- reporting -------------------------------------------------------

    def report(self) -> ExecutionReport:
        counts = self._counts
        return ExecutionReport(
            executed=self._terminal,
            kept=counts[ExecStatus.OK] + counts[ExecStatus.INSUFFICIENT],
            ok=counts[ExecStatus.OK],
            insufficient=counts[ExecStatus.INSUFFICIENT],
            dropped=counts[ExecStatus.DROPPED],
            failed=counts[ExecStatus.FAILED],
            critical_path=self.critical_path,
            trace=self.trace,
        )


def run(frames, executor, trace: bool = True) -> ExecutionReport:
    """Convenience single-shot schedule: ingest all frames, drain, report."""
    sched = Scheduler(executor, trace=trace)
    for frame in frames:
        sched.ingest_frame(frame)
    sched.drain()
    sched.finish_window()
    return sched.report()


def requeue_dropped(window: WindowResult, sink, max_retries: int = 3):
    """Hand dropped txns back for a fresh analysis pass in a later window.

    sink(txn) receives each retryable txn; txns beyond max_retries are
    returned as discarded instead. Returns (requeued_count, discarded list).
    """
    requeued = 0
    discarded: list[Transaction] = []
    for txn in window.dropped:
        if txn.attempt + 1 > max_retries:
            discarded.append(txn)
        else:
            sink(txn)
            requeued += 1
    return requeued, discarded
