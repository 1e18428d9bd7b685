"""End-to-end pipeline: analyze -> frame -> schedule/execute -> form block.

The mempool is consumed in windows of block_interval txns. Each window is
analyzed (optionally across processes), fed through the framer (which is
flushed at the window boundary so every txn of the window reaches the
scheduler), executed to quiescence, and closed with a block: the kept txns in
canonical order plus the refreshed commitment root. Dropped txns re-enter the
mempool under fresh ids with their origin recorded, so retries land in later
blocks exactly once.
"""

from __future__ import annotations

import json
import os
import shutil
import struct
import tempfile
import time
from collections import deque
from dataclasses import dataclass

from frameflow.analyze import AnalyzePool
from frameflow.bloom import _splitmix64
from frameflow.commit import KeyedCommitment
from frameflow.engine import ExecStatus
from frameflow.framer import BLOOM, EXACT, Frame, FramerConfig, StreamFramer
from frameflow.model import Kind, RWSet, Transaction, TransferOp
from frameflow.scheduler import Scheduler, TraceEntry, requeue_dropped
from frameflow.workload import (
    RECORD_SIZE,
    WorkloadSpec,
    encode_record,
    generate_records,
    initial_funding,
    read_workload,
    state_keys,
)
from frameflow.workers import DenseState, ExecConfig, InlineExecutor, WorkerPool

METRICS_SCHEMA = "frameflow-metrics-v1"
BLOCKS_SCHEMA = "frameflow-blocks-v1"
_TRACE_MAGIC = b"FFTRACE1"
_NO_ORIGIN = (1 << 64) - 1


class StageError(RuntimeError):
    """Contract violation wrapped with the pipeline stage that raised it."""

    def __init__(self, stage: str, message: str):
        super().__init__(f"[{stage}] {message}")
        self.stage = stage


@dataclass
class RunConfig:
    spec: WorkloadSpec | None = None
    workload_path: str | None = None
    workers: int = 1
    analyze_workers: int | None = None
    n_frames: int = 64
    bloom_bits: int = 2048
    bloom_hashes: int = 4
    max_frame_txns: int | None = None
    max_frame_age: int | None = None
    divergence_mode: str = "strict"
    block_interval: int = 10_000
    inject_divergence: float = 0.0
    inject_always: bool = False
    max_retries: int = 3
    fp_baseline: bool = True
    echo_exec: bool = False
    executor: str = "auto"  # auto | inline | pool
    out_dir: str | None = None
    collect_trace: bool = True

    def validate(self) -> None:
        if self.spec is None and self.workload_path is None:
            raise ValueError("need a workload spec or a workload file")
        if self.workers < 1 or (self.analyze_workers or 1) < 1:
            raise ValueError("worker counts must be >= 1")
        if self.block_interval < 1:
            raise ValueError("block_interval must be >= 1")
        if not 0.0 <= self.inject_divergence <= 1.0:
            raise ValueError("inject_divergence is a rate in [0, 1]")
        if self.executor not in ("auto", "inline", "pool"):
            raise ValueError(f"unknown executor {self.executor!r}")


@dataclass
class BlockRecord:
    height: int
    parent_root: str | None
    state_root: str | None
    txns: list[dict]


@dataclass
class RunResult:
    spec: WorkloadSpec
    config: RunConfig
    metrics: dict
    blocks: list[BlockRecord]
    trace: list[TraceEntry]
    genesis_root: str | None
    discarded: list[dict]

    @property
    def block_roots(self) -> list[str | None]:
        return [b.state_root for b in self.blocks]


@dataclass
class _MempoolEntry:
    txn_id: int
    record: bytes
    attempt: int
    origin_id: int | None
    inject: bool


def _inject_flag(seed: int, txn_id: int, rate: float) -> bool:
    if rate <= 0.0:
        return False
    x = _splitmix64((seed << 1) ^ 0xD1B54A32D192ED03 ^ txn_id)
    return (x >> 11) / float(1 << 53) < rate


def run_pipeline(cfg: RunConfig) -> RunResult:
    cfg.validate()
    t_run0 = time.perf_counter()

    # -- workload --------------------------------------------------------
    try:
        if cfg.workload_path is not None:
            spec, records = read_workload(cfg.workload_path)
        else:
            spec = cfg.spec
            spec.validate()
            records = generate_records(spec)
    except (OSError, ValueError) as exc:
        raise StageError("workload", str(exc)) from exc

    # -- state + commitment ----------------------------------------------
    keys = state_keys(spec)
    funding = initial_funding(spec)
    state_dir = None
    dense = None
    commitment = None
    genesis_root: str | None = None
    if not cfg.echo_exec:
        state_dir = tempfile.mkdtemp(prefix="frameflow-state-")
        try:
            dense = DenseState.create(state_dir, keys, funding)
            commitment = KeyedCommitment(keys, funding)
        except (OSError, ValueError) as exc:
            raise StageError("state", str(exc)) from exc
        genesis_root = commitment.root.hex()

    # -- stage workers -----------------------------------------------------
    n_analyze = cfg.analyze_workers if cfg.analyze_workers is not None else cfg.workers
    analyze_pool = AnalyzePool(n_analyze)
    exec_cfg = ExecConfig(divergence_mode=cfg.divergence_mode, echo=cfg.echo_exec)
    use_pool = (
        not cfg.echo_exec
        and cfg.executor != "inline"
        and (cfg.workers > 1 or cfg.executor == "pool")
    )
    if use_pool:
        executor = WorkerPool(cfg.workers, state_dir, exec_cfg)
    else:
        executor = InlineExecutor(dense, exec_cfg)

    framer = StreamFramer(
        FramerConfig(
            n_frames=cfg.n_frames,
            bloom_bits=cfg.bloom_bits,
            bloom_hashes=cfg.bloom_hashes,
            max_frame_txns=cfg.max_frame_txns,
            max_frame_age=cfg.max_frame_age,
            admissibility=BLOOM,
        )
    )
    sched = Scheduler(executor, trace=cfg.collect_trace)

    # -- run loop ----------------------------------------------------------
    mempool: deque[_MempoolEntry] = deque(
        _MempoolEntry(
            i,
            records[i * RECORD_SIZE : (i + 1) * RECORD_SIZE],
            0,
            None,
            _inject_flag(spec.seed, i, cfg.inject_divergence),
        )
        for i in range(spec.txn_count)
    )
    next_txn_id = spec.txn_count
    timers = {"analyze_s": 0.0, "frame_s": 0.0, "execute_s": 0.0, "commit_s": 0.0}
    blocks: list[BlockRecord] = []
    discarded: list[dict] = []
    malformed: list[dict] = []
    requeued_total = 0
    parent_root = genesis_root
    window_rw_log: list[list[tuple[int, RWSet]]] = []

    try:
        while mempool:
            entries = [
                mempool.popleft()
                for _ in range(min(cfg.block_interval, len(mempool)))
            ]

            t0 = time.perf_counter()
            try:
                raw = analyze_pool.analyze_records(
                    [(e.txn_id, e.record) for e in entries]
                )
            except Exception as exc:
                raise StageError("analyze", str(exc)) from exc
            txns: list[Transaction] = []
            for e, res in zip(entries, raw):
                if len(res) == 2:
                    malformed.append({"id": e.txn_id, "reason": res[1]})
                    continue
                _, kind, sender, receiver, amount, reads, writes = res
                txns.append(
                    Transaction(
                        id=e.txn_id,
                        op=TransferOp(Kind(kind), sender, receiver, amount),
                        approx_rw=RWSet(frozenset(reads), frozenset(writes)),
                        origin_id=e.origin_id,
                        attempt=e.attempt,
                        inject_divergence=e.inject,
                    )
                )
            timers["analyze_s"] += time.perf_counter() - t0

            t0 = time.perf_counter()
            frames: list[Frame] = []
            try:
                for txn in txns:
                    frames.extend(framer.feed(txn))
                frames.extend(framer.flush())
            except Exception as exc:
                raise StageError("framer", str(exc)) from exc
            timers["frame_s"] += time.perf_counter() - t0
            if cfg.fp_baseline:
                window_rw_log.append([(t.id, t.approx_rw) for t in txns])

            t0 = time.perf_counter()
            try:
                for frame in frames:
                    sched.ingest_frame(frame)
                sched.drain()
                window = sched.finish_window()
            except Exception as exc:
                raise StageError("scheduler", str(exc)) from exc
            timers["execute_s"] += time.perf_counter() - t0

            def _requeue(txn: Transaction) -> None:
                nonlocal next_txn_id
                mempool.append(
                    _MempoolEntry(
                        txn_id=next_txn_id,
                        record=encode_record(txn.op),
                        attempt=txn.attempt + 1,
                        origin_id=txn.origin_id if txn.origin_id is not None else txn.id,
                        inject=txn.inject_divergence if cfg.inject_always else False,
                    )
                )
                next_txn_id += 1

            n_requeued, over_limit = requeue_dropped(
                window, _requeue, cfg.max_retries
            )
            requeued_total += n_requeued
            discarded.extend(
                {
                    "id": t.id,
                    "origin": t.origin_id if t.origin_id is not None else t.id,
                    "attempts": t.attempt + 1,
                }
                for t in over_limit
            )

            t0 = time.perf_counter()
            root_hex = None
            if not cfg.echo_exec:
                if sched.inflight:
                    raise StageError("block", "txns in flight at block barrier")
                written: dict[int, int] = {}
                for entry in window.kept:
                    for key in entry.writes:
                        written[key] = dense.get(key)
                try:
                    root_hex = commitment.refresh(written).hex()
                except (KeyError, ValueError) as exc:
                    raise StageError("commit", str(exc)) from exc
            blocks.append(
                BlockRecord(
                    height=len(blocks),
                    parent_root=parent_root,
                    state_root=root_hex,
                    txns=[
                        {
                            "id": e.txn_id,
                            "seq": e.exec_seq,
                            "status": e.status.name.lower(),
                            "origin": e.origin_id,
                            "attempt": e.attempt,
                        }
                        for e in window.kept
                    ],
                )
            )
            parent_root = root_hex
            timers["commit_s"] += time.perf_counter() - t0
    finally:
        analyze_pool.close()
        executor.close()
        if state_dir is not None:
            shutil.rmtree(state_dir, ignore_errors=True)

    wall_s = time.perf_counter() - t_run0
    report = sched.report()
    fmetrics = framer.snapshot_metrics()

    fp_stats = None
    if cfg.fp_baseline:
        fp_stats = _fp_baseline(cfg, window_rw_log, fmetrics.mean_frame_size)

    kept = report.kept
    metrics = {
        "schema": METRICS_SCHEMA,
        "tps": kept / wall_s if wall_s > 0 else 0.0,
        "executed_tps": report.executed / wall_s if wall_s > 0 else 0.0,
        "measured_tlp": report.measured_tlp,
        "mean_frame_size": fmetrics.mean_frame_size,
        "frame_count": fmetrics.frame_count,
        "drop_count": report.dropped,
        "fp_tlp_loss_pct": fp_stats["fp_tlp_loss_pct"] if fp_stats else None,
        "stage_wall_s": {**timers, "total_s": wall_s},
        "block_roots": [b.state_root for b in blocks],
        "genesis_root": genesis_root,
        "critical_path": report.critical_path,
        "counts": {
            "input": spec.txn_count,
            "malformed": len(malformed),
            "executed": report.executed,
            "kept": kept,
            "ok": report.ok,
            "insufficient": report.insufficient,
            "dropped": report.dropped,
            "requeued": requeued_total,
            "discarded": len(discarded),
            "failed": report.failed,
        },
        "frames": {
            "count": fmetrics.frame_count,
            "mean_size": fmetrics.mean_frame_size,
            "midstream_finalizes": fmetrics.midstream_finalizes,
            "age_ejects": fmetrics.age_ejects,
            "cap_ejects": fmetrics.cap_ejects,
            "singleton_escapes": fmetrics.singleton_escapes,
        },
        "fp_baseline": fp_stats,
        "workload": {
            "kind": spec.kind.name.lower(),
            "accounts": spec.total_accounts,
            "gamma": spec.gamma,
            "alpha": spec.alpha,
            "txns": spec.txn_count,
            "seed": spec.seed,
            "batch_size": spec.batch_size,
        },
        "run_config": {
            "workers": cfg.workers,
            "analyze_workers": n_analyze,
            "n_frames": cfg.n_frames,
            "bloom_bits": cfg.bloom_bits,
            "bloom_hashes": cfg.bloom_hashes,
            "divergence_mode": cfg.divergence_mode,
            "block_interval": cfg.block_interval,
            "inject_divergence": cfg.inject_divergence,
            "max_retries": cfg.max_retries,
            "echo_exec": cfg.echo_exec,
            "executor": "inline" if not use_pool else "pool",
        },
        "workers_observed": sorted({e.worker for e in report.trace}),
    }

    result = RunResult(
        spec=spec,
        config=cfg,
        metrics=metrics,
        blocks=blocks,
        trace=report.trace,
        genesis_root=genesis_root,
        discarded=discarded,
    )
    if cfg.out_dir:
        write_artifacts(result, cfg.out_dir)
    return result


def _fp_baseline(cfg: RunConfig, window_rw_log, bloom_mean: float) -> dict:
    """Re-frame the same annotated stream with exact-set admissibility,
    flushing at the same window boundaries, and price the Bloom FP cost."""
    exact_framer = StreamFramer(
        FramerConfig(
            n_frames=cfg.n_frames,
            bloom_bits=cfg.bloom_bits,
            bloom_hashes=cfg.bloom_hashes,
            max_frame_txns=cfg.max_frame_txns,
            max_frame_age=cfg.max_frame_age,
            admissibility=EXACT,
        )
    )
    for window in window_rw_log:
        for txn_id, rw in window:
            exact_framer.feed(Transaction(id=txn_id, op=_DUMMY_OP, approx_rw=rw))
        exact_framer.flush()
    exact_m = exact_framer.snapshot_metrics()
    exact_mean = exact_m.mean_frame_size
    loss = (1.0 - bloom_mean / exact_mean) * 100.0 if exact_mean > 0 else 0.0
    return {
        "exact_mean_frame_size": exact_mean,
        "bloom_mean_frame_size": bloom_mean,
        "exact_frame_count": exact_m.frame_count,
        "fp_tlp_loss_pct": loss,
    }


_DUMMY_OP = TransferOp(Kind.NATIVE, 0, 1, 0)


# -- artifacts ---------------------------------------------------------------

_TRACE_HEAD = struct.Struct(">QQHQQBHQQHH")


def write_artifacts(result: RunResult, out_dir: str) -> None:
    os.makedirs(out_dir, exist_ok=True)
    with open(os.path.join(out_dir, "metrics.json"), "w") as fh:
        json.dump(result.metrics, fh, indent=2, sort_keys=True)
        fh.write("\n")
    with open(os.path.join(out_dir, "blocks.json"), "w") as fh:
        json.dump(
            {
                "schema": BLOCKS_SCHEMA,
                "genesis_root": result.genesis_root,
                "blocks": [
                    {
                        "height": b.height,
                        "parent_root": b.parent_root,
                        "state_root": b.state_root,
                        "txns": b.txns,
                    }
                    for b in result.blocks
                ],
                "discarded": result.discarded,
            },
            fh,
            indent=2,
            sort_keys=True,
        )
        fh.write("\n")
    write_trace(result.trace, os.path.join(out_dir, "trace.bin"))


def write_trace(trace: list[TraceEntry], path: str) -> None:
    with open(path, "wb") as fh:
        fh.write(_TRACE_MAGIC)
        fh.write(len(trace).to_bytes(8, "big"))
        for e in trace:
            fh.write(
                _TRACE_HEAD.pack(
                    e.txn_id,
                    _NO_ORIGIN if e.origin_id is None else e.origin_id,
                    e.attempt,
                    e.exec_seq,
                    e.frame_seq,
                    int(e.status),
                    e.worker,
                    e.start_ns,
                    e.end_ns,
                    len(e.reads),
                    len(e.writes),
                )
            )
            for key in e.reads:
                fh.write(key.to_bytes(8, "big"))
            for key in e.writes:
                fh.write(key.to_bytes(8, "big"))


def read_trace(path: str) -> list[TraceEntry]:
    out: list[TraceEntry] = []
    with open(path, "rb") as fh:
        if fh.read(8) != _TRACE_MAGIC:
            raise ValueError(f"{path} is not a trace file")
        count = int.from_bytes(fh.read(8), "big")
        for _ in range(count):
            head = fh.read(_TRACE_HEAD.size)
            if len(head) != _TRACE_HEAD.size:
                raise ValueError("truncated trace file")
            (
                txn_id,
                origin,
                attempt,
                exec_seq,
                frame_seq,
                status,
                worker,
                start_ns,
                end_ns,
                n_reads,
                n_writes,
            ) = _TRACE_HEAD.unpack(head)
            body = fh.read(8 * (n_reads + n_writes))
            if len(body) != 8 * (n_reads + n_writes):
                raise ValueError("truncated trace record")
            keys = [
                int.from_bytes(body[i * 8 : (i + 1) * 8], "big")
                for i in range(n_reads + n_writes)
            ]
            out.append(
                TraceEntry(
                    txn_id=txn_id,
                    origin_id=None if origin == _NO_ORIGIN else origin,
                    attempt=attempt,
                    exec_seq=exec_seq,
                    frame_seq=frame_seq,
                    status=ExecStatus(status),
                    reads=tuple(keys[:n_reads]),
                    writes=tuple(keys[n_reads:]),
                    start_ns=start_ns,
                    end_ns=end_ns,
                    worker=worker,
                )
            )
    return out
