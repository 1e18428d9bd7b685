"""Independent post-run verification of pipeline artifacts.

Replays every block's kept txns one at a time on a throwaway store, recomputes
each state root from scratch, and checks the recorded schedule, lineage, and
parallelism figures against the brute-force oracles. None of this reuses the
pipeline's incremental commitment or executor paths; agreement here means two
separate routes arrived at the same bytes.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass

from frameflow import oracle
from frameflow.commit import merkle_root
from frameflow.engine import execute
from frameflow.model import Kind, RWSet, Transaction
from frameflow.pipeline import BlockRecord, RunResult, read_trace
from frameflow.workload import (
    RECORD_SIZE,
    WorkloadSpec,
    decode_record,
    generate_records,
    initial_funding,
    state_keys,
)

_REL_EPS = 1e-9


@dataclass(frozen=True)
class CheckResult:
    name: str
    ok: bool
    detail: str


@dataclass
class VerifyReport:
    checks: list[CheckResult]

    @property
    def ok(self) -> bool:
        return all(c.ok for c in self.checks)

    def to_text(self) -> str:
        lines = [
            f"VERIFY {'PASS' if self.ok else 'FAIL'} "
            f"({sum(c.ok for c in self.checks)}/{len(self.checks)} checks)"
        ]
        for c in self.checks:
            lines.append(f"  [{'pass' if c.ok else 'FAIL'}] {c.name}: {c.detail}")
        return "\n".join(lines) + "\n"


def verify_result(result: RunResult) -> VerifyReport:
    return _verify(
        spec=result.spec,
        blocks=result.blocks,
        genesis_root=result.genesis_root,
        trace=result.trace,
        metrics=result.metrics,
        discarded=result.discarded,
    )


def verify_dir(out_dir: str) -> VerifyReport:
    """Verify a run purely from its on-disk artifacts."""
    with open(os.path.join(out_dir, "metrics.json")) as fh:
        metrics = json.load(fh)
    with open(os.path.join(out_dir, "blocks.json")) as fh:
        chain = json.load(fh)
    trace = read_trace(os.path.join(out_dir, "trace.bin"))
    w = metrics["workload"]
    spec = WorkloadSpec(
        kind=Kind[w["kind"].upper()],
        total_accounts=w["accounts"],
        gamma=w["gamma"],
        alpha=w["alpha"],
        txn_count=w["txns"],
        seed=w["seed"],
        batch_size=w["batch_size"],
    )
    blocks = [
        BlockRecord(
            height=b["height"],
            parent_root=b["parent_root"],
            state_root=b["state_root"],
            txns=b["txns"],
        )
        for b in chain["blocks"]
    ]
    return _verify(
        spec=spec,
        blocks=blocks,
        genesis_root=chain["genesis_root"],
        trace=trace,
        metrics=metrics,
        discarded=chain.get("discarded", []),
    )


def _verify(spec, blocks, genesis_root, trace, metrics, discarded) -> VerifyReport:
    echo = bool(metrics.get("run_config", {}).get("echo_exec", False))
    checks: list[CheckResult] = []
    records = generate_records(spec)
    by_seq = {e.exec_seq: e for e in trace}

    checks.append(_check_lineage(blocks, by_seq, discarded))
    checks.append(_check_chain(spec, blocks, genesis_root, echo))
    replay_check, store = _check_replay(spec, blocks, records, by_seq, echo)
    checks.append(replay_check)
    checks.append(_check_conservation(spec, store, echo))
    checks.append(_check_schedule(trace))
    checks.append(_check_sandwich(metrics, blocks, by_seq))
    return VerifyReport(checks)


def _op_for(spec: WorkloadSpec, records: bytes, txn: dict):
    base = txn["origin"] if txn.get("origin") is not None else txn["id"]
    if not 0 <= base < spec.txn_count:
        raise ValueError(f"txn {txn['id']} has origin {base} outside the workload")
    rec = records[base * RECORD_SIZE : (base + 1) * RECORD_SIZE]
    return decode_record(rec)


def _check_lineage(blocks, by_seq, discarded) -> CheckResult:
    seen_ids: set[int] = set()
    kept_origins: set[int] = set()
    last_seq = -1
    kept_total = 0
    for block in blocks:
        for txn in block.txns:
            kept_total += 1
            if txn["id"] in seen_ids:
                return CheckResult(
                    "lineage", False, f"txn id {txn['id']} appears in two blocks"
                )
            seen_ids.add(txn["id"])
            if txn["seq"] <= last_seq:
                return CheckResult(
                    "lineage",
                    False,
                    f"exec seq {txn['seq']} not increasing at block {block.height}",
                )
            last_seq = txn["seq"]
            entry = by_seq.get(txn["seq"])
            if entry is None or entry.txn_id != txn["id"]:
                return CheckResult(
                    "lineage", False, f"block txn {txn['id']} missing from trace"
                )
            if entry.status.name.lower() != txn["status"]:
                return CheckResult(
                    "lineage",
                    False,
                    f"txn {txn['id']} status {txn['status']} != trace "
                    f"{entry.status.name.lower()}",
                )
            origin = txn["origin"] if txn["origin"] is not None else txn["id"]
            if origin in kept_origins:
                return CheckResult(
                    "lineage", False, f"origin {origin} kept more than once"
                )
            kept_origins.add(origin)
    for d in discarded:
        if d["origin"] in kept_origins:
            return CheckResult(
                "lineage", False, f"discarded origin {d['origin']} also kept"
            )
    kept_in_trace = sum(1 for e in by_seq.values() if e.status.kept)
    if kept_in_trace != kept_total:
        return CheckResult(
            "lineage",
            False,
            f"{kept_total} kept txns in blocks vs {kept_in_trace} in trace",
        )
    return CheckResult(
        "lineage",
        True,
        f"{kept_total} kept txns unique, ordered, one attempt kept per origin",
    )


def _check_chain(spec, blocks, genesis_root, echo) -> CheckResult:
    if echo:
        return CheckResult("chain", True, "skipped (ablation run has no roots)")
    keys = state_keys(spec)
    funding = initial_funding(spec)
    expect_genesis = merkle_root([(int(k), funding) for k in keys]).hex()
    if genesis_root != expect_genesis:
        return CheckResult(
            "chain", False, f"genesis root {genesis_root} != recomputed {expect_genesis}"
        )
    parent = genesis_root
    for block in blocks:
        if block.parent_root != parent:
            return CheckResult(
                "chain", False, f"block {block.height} parent root broken"
            )
        if block.state_root is None:
            return CheckResult(
                "chain", False, f"block {block.height} missing state root"
            )
        parent = block.state_root
    return CheckResult(
        "chain", True, f"genesis + {len(blocks)} block roots chain correctly"
    )


def _check_replay(spec, blocks, records, by_seq, echo):
    if echo:
        return CheckResult("replay", True, "skipped (ablation run)"), None
    keys = state_keys(spec)
    funding = initial_funding(spec)
    store = oracle.OracleStore(keys, funding)
    n = 0
    for block in blocks:
        for txn in block.txns:
            op = _op_for(spec, records, txn)
            res = execute(Transaction(id=txn["id"], op=op), store, persist=True)
            n += 1
            if res.status.name.lower() != txn["status"]:
                return (
                    CheckResult(
                        "replay",
                        False,
                        f"txn {txn['id']} replayed {res.status.name.lower()} "
                        f"but block {block.height} says {txn['status']}",
                    ),
                    store,
                )
            entry = by_seq.get(txn["seq"])
            if entry is None:
                return (
                    CheckResult(
                        "replay", False, f"txn {txn['id']} missing from trace"
                    ),
                    store,
                )
            if (
                set(res.actual_rw.reads) != set(entry.reads)
                or set(res.actual_rw.writes) != set(entry.writes)
            ):
                return (
                    CheckResult(
                        "replay",
                        False,
                        f"txn {txn['id']} rw-set differs between trace and replay",
                    ),
                    store,
                )
        root = merkle_root(store.items_sorted()).hex()
        if root != block.state_root:
            return (
                CheckResult(
                    "replay",
                    False,
                    f"block {block.height} root {block.state_root} != serial {root}",
                ),
                store,
            )
    return (
        CheckResult(
            "replay", True, f"{n} kept txns replayed serially; every block root matches"
        ),
        store,
    )


def _check_conservation(spec, store, echo) -> CheckResult:
    if echo or store is None:
        return CheckResult("conservation", True, "skipped (ablation run)")
    keys = state_keys(spec)
    expect = initial_funding(spec) * len(keys)
    total = sum(v for _, v in store.items_sorted())
    if total != expect:
        return CheckResult(
            "conservation", False, f"final value sum {total} != initial {expect}"
        )
    return CheckResult("conservation", True, f"value sum conserved at {expect}")


def _check_schedule(trace) -> CheckResult:
    if not trace:
        return CheckResult("schedule", True, "empty trace")
    v = oracle.check_schedule(trace)
    if v is not None:
        return CheckResult(
            "schedule",
            False,
            f"seq {v.first_seq} and {v.second_seq} overlap on key {v.key:#x} "
            f"({v.reason})",
        )
    return CheckResult(
        "schedule", True, f"{len(trace)} executions conflict-serializable in seq order"
    )


def _check_sandwich(metrics, blocks, by_seq) -> CheckResult:
    mean_frame = metrics["mean_frame_size"]
    measured = metrics["measured_tlp"]
    if mean_frame > measured * (1 + _REL_EPS):
        return CheckResult(
            "tlp-sandwich",
            False,
            f"mean frame size {mean_frame:.3f} exceeds measured TLP {measured:.3f}",
        )
    counts = metrics["counts"]
    clean = (
        counts["dropped"] == 0
        and counts["failed"] == 0
        and counts["discarded"] == 0
        and counts["malformed"] == 0
    )
    kept_entries = [
        e
        for block in blocks
        for t in block.txns
        if (e := by_seq.get(t["seq"])) is not None
    ]
    if not clean:
        return CheckResult(
            "tlp-sandwich",
            True,
            f"lower bound holds ({mean_frame:.3f} <= {measured:.3f}); upper bound "
            "skipped: run had drops",
        )
    if not kept_entries or len(kept_entries) > oracle.EXACT_INSTANCE_CAP:
        return CheckResult(
            "tlp-sandwich",
            True,
            f"lower bound holds ({mean_frame:.3f} <= {measured:.3f}); upper bound "
            f"skipped: {len(kept_entries)} txns exceeds exact cap",
        )
    rws = [
        RWSet(frozenset(e.reads), frozenset(e.writes))
        for e in sorted(kept_entries, key=lambda e: e.exec_seq)
    ]
    exact = oracle.exact_tlp(rws)
    if measured > exact * (1 + _REL_EPS):
        return CheckResult(
            "tlp-sandwich",
            False,
            f"measured TLP {measured:.3f} exceeds exact TLP {exact:.3f}",
        )
    return CheckResult(
        "tlp-sandwich",
        True,
        f"{mean_frame:.3f} <= {measured:.3f} <= {exact:.3f}",
    )
