"""Execution backends: shared memory-mapped state plus process workers.

The slot universe is fixed once the workload is prefunded, so state lives in
two files: a sorted uint64 key array and a uint64 value array, both mapped by
every process. The scheduler only dispatches txns whose conflicts are all
resolved, so concurrent workers always touch disjoint slots and the store
needs no locks. Each txn buffers its writes, validates its actual footprint
against the annotation, and applies only on keep (the divergence drop rule).
"""

from __future__ import annotations

import multiprocessing as mp
import os
import queue
import time
from dataclasses import dataclass

import numpy as np

from frameflow.engine import ExecStatus, divergence_probe_key, interpret_op
from frameflow.model import MAX_SLOT_VALUE, Kind, TransferOp

STRICT = "strict"
SUBSET = "subset"

_KEYS_FILE = "state_keys.npy"
_VALUES_FILE = "state_values.bin"


class DenseState:
    """uint64 values over a fixed sorted key array, file-backed and mapped
    shared, so worker processes see each other's writes immediately."""

    def __init__(self, directory: str, keys: np.ndarray, values: np.ndarray):
        self.directory = directory
        self.keys = keys
        self.values = values
        self._idx_cache: dict[int, int] = {}

    @classmethod
    def create(cls, directory: str, keys: np.ndarray, initial_value: int) -> "DenseState":
        if not 0 <= initial_value <= MAX_SLOT_VALUE:
            raise ValueError(f"initial value {initial_value} outside slot range")
        keys = np.ascontiguousarray(keys, dtype=np.uint64)
        if keys.size > 1 and not (keys[1:] > keys[:-1]).all():
            raise ValueError("keys must be strictly increasing")
        os.makedirs(directory, exist_ok=True)
        np.save(os.path.join(directory, _KEYS_FILE), keys)
        values = np.memmap(
            os.path.join(directory, _VALUES_FILE),
            dtype="<u8",
            mode="w+",
            shape=(keys.size,),
        )
        values[:] = initial_value
        values.flush()
        return cls(directory, keys, values)

    @classmethod
    def attach(cls, directory: str) -> "DenseState":
        keys = np.load(os.path.join(directory, _KEYS_FILE), mmap_mode="r")
        values = np.memmap(
            os.path.join(directory, _VALUES_FILE), dtype="<u8", mode="r+"
        )
        if values.size != keys.size:
            raise ValueError("state files disagree on slot count")
        return cls(directory, keys, values)

    def index_of(self, key: int) -> int:
        """Slot index for key, or -1 when outside the universe."""
        idx = self._idx_cache.get(key)
        if idx is not None:
            return idx
        i = int(np.searchsorted(self.keys, np.uint64(key)))
        if i >= self.keys.size or int(self.keys[i]) != key:
            return -1
        self._idx_cache[key] = i
        return i

    def get(self, key: int) -> int:
        i = self.index_of(key)
        return int(self.values[i]) if i >= 0 else 0

    def set(self, key: int, value: int) -> None:
        i = self.index_of(key)
        if i < 0:
            raise KeyError(f"key {key} outside the fixed slot universe")
        if not 0 <= value <= MAX_SLOT_VALUE:
            raise ValueError(f"slot value {value} out of range")
        self.values[i] = value

    def value_at(self, idx: int) -> int:
        return int(self.values[idx])

    def close(self) -> None:
        # memmaps release on GC; explicit del keeps Windows-style semantics
        del self.values


# -- task protocol ---------------------------------------------------------
#
# Tasks and results cross process boundaries as plain tuples.
# Task: (exec_seq, txn_id, kind, sender, receiver, amount, attempt, inject,
#        approx_reads, approx_writes)
# Result: (exec_seq, txn_id, status, reads, writes, start_ns, end_ns, worker)


@dataclass(frozen=True)
class ExecConfig:
    divergence_mode: str = STRICT
    echo: bool = False

    def __post_init__(self):
        if self.divergence_mode not in (STRICT, SUBSET):
            raise ValueError(f"unknown divergence mode {self.divergence_mode!r}")


def validate_rwset(approx_reads, approx_writes, reads, writes, mode: str) -> bool:
    """Keep/drop decision. strict: actual equals the annotation exactly.
    subset: actual stays inside what scheduling reserved (reads within all
    reserved keys, writes within reserved writes)."""
    ar, aw = frozenset(approx_reads), frozenset(approx_writes)
    r, w = frozenset(reads), frozenset(writes)
    if mode == STRICT:
        return r == ar and w == aw
    return w <= aw and r <= (ar | aw)


def execute_task(task, state, cfg: ExecConfig, worker_id: int):
    (seq, txn_id, kind, sender, receiver, amount, attempt, inject, a_reads, a_writes) = task
    start = time.monotonic_ns()
    if cfg.echo:
        # Ablation backend: report the annotation as the actual footprint.
        end = time.monotonic_ns()
        return (seq, txn_id, int(ExecStatus.OK), a_reads, a_writes, start, end, worker_id)

    op = TransferOp(Kind(kind), sender, receiver, amount)
    reads: set[int] = set()
    writes: set[int] = set()
    buffered: dict[int, int] = {}

    def get(key: int) -> int:
        reads.add(key)
        return buffered[key] if key in buffered else state.get(key)

    def put(key: int, value: int) -> None:
        writes.add(key)
        buffered[key] = value

    try:
        if inject:
            get(divergence_probe_key(txn_id))
        status = interpret_op(op, get, put)
        if validate_rwset(
            frozenset(a_reads), frozenset(a_writes), reads, writes, cfg.divergence_mode
        ):
            for key, value in buffered.items():
                state.set(key, value)
        else:
            status = ExecStatus.DROPPED
    except Exception:  # contract violation inside the VM; keep going
        end = time.monotonic_ns()
        return (seq, txn_id, int(ExecStatus.FAILED), (), (), start, end, worker_id)
    end = time.monotonic_ns()
    return (
        seq,
        txn_id,
        int(status),
        tuple(sorted(reads)),
        tuple(sorted(writes)),
        start,
        end,
        worker_id,
    )


# -- executors -------------------------------------------------------------


class InlineExecutor:
    """Runs tasks synchronously in the calling process. The unit-test and
    workers=1 backend; also the trusted-simple half of the hybrid pool."""

    def __init__(self, state, cfg: ExecConfig):
        self.state = state
        self.cfg = cfg
        self._done: list[tuple] = []

    def submit(self, tasks) -> None:
        self._done.extend(execute_task(t, self.state, self.cfg, 0) for t in tasks)

    def poll(self, block: bool = False):
        out = self._done
        self._done = []
        return out

    def close(self) -> None:
        pass

    @property
    def n_workers(self) -> int:
        return 1


def _worker_main(worker_id: int, state_dir: str, cfg: ExecConfig, task_q, result_q):
    state = DenseState.attach(state_dir)
    while True:
        item = task_q.get()
        if item is None:
            break
        result_q.put([execute_task(t, state, cfg, worker_id) for t in item])


class WorkerPool:
    """Fixed set of forked worker processes fed from one shared task queue.

    Small ready batches execute inline on the caller's mapping of the same
    state files rather than paying queue latency; large batches are split so
    every worker gets work. Both routes are the same execute_task."""

    def __init__(
        self,
        n_workers: int,
        state_dir: str,
        cfg: ExecConfig,
        inline_threshold: int | None = None,
    ):
        if n_workers < 1:
            raise ValueError("n_workers must be >= 1")
        ctx = mp.get_context("fork")
        self.cfg = cfg
        self.n_workers = n_workers
        self.inline_threshold = (
            inline_threshold if inline_threshold is not None else max(2, n_workers)
        )
        self._task_q = ctx.Queue()
        self._result_q = ctx.Queue()
        self._outstanding = 0
        self._local_state = DenseState.attach(state_dir)
        self._inline_done: list[tuple] = []
        self._procs = [
            ctx.Process(
                target=_worker_main,
                args=(i + 1, state_dir, cfg, self._task_q, self._result_q),
                daemon=True,
            )
            for i in range(n_workers)
        ]
        for p in self._procs:
            p.start()

    def submit(self, tasks) -> None:
        tasks = list(tasks)
        if not tasks:
            return
        if len(tasks) <= self.inline_threshold:
            self._inline_done.extend(
                execute_task(t, self._local_state, self.cfg, 0) for t in tasks
            )
            return
        step = max(1, min(512, (len(tasks) + 2 * self.n_workers - 1) // (2 * self.n_workers)))
        for i in range(0, len(tasks), step):
            self._task_q.put(tasks[i : i + step])
            self._outstanding += 1

    def poll(self, block: bool = False):
        out = self._inline_done
        self._inline_done = []
        while self._outstanding:
            try:
                if block and not out:
                    chunk = self._result_q.get(timeout=60.0)
                else:
                    chunk = self._result_q.get_nowait()
            except queue.Empty:
                if block and not out:
                    raise TimeoutError(
                        "no execution results within 60s; worker stall"
                    ) from None
                break
            self._outstanding -= 1
            out.extend(chunk)
        return out

    def close(self) -> None:
        for _ in self._procs:
            self._task_q.put(None)
        for p in self._procs:
            p.join(timeout=10.0)
            if p.is_alive():
                p.terminate()
        self._local_state.close()
