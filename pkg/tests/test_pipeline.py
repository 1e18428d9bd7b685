import json

import pytest

from frameflow.model import Kind
from frameflow.pipeline import (
    RunConfig,
    read_trace,
    run_pipeline,
    write_trace,
)
from frameflow.verify import verify_dir, verify_result
from frameflow.workload import WorkloadSpec


def _spec(**kw):
    base = dict(kind=Kind.NATIVE, total_accounts=1 << 12, gamma=16, alpha=0.3,
                txn_count=400, seed=21)
    base.update(kw)
    return WorkloadSpec(**base)


def _run(spec=None, **kw):
    cfg = RunConfig(spec=spec or _spec(), block_interval=150, **kw)
    return run_pipeline(cfg)


def test_small_run_keeps_everything():
    res = _run()
    c = res.metrics["counts"]
    assert c["kept"] == 400
    assert c["dropped"] == 0
    assert c["failed"] == 0
    assert res.metrics["frame_count"] > 0


def test_runs_are_deterministic():
    a = _run()
    b = _run()
    assert a.block_roots == b.block_roots
    assert a.metrics["frame_count"] == b.metrics["frame_count"]
    assert [e.exec_seq for e in a.trace] == [e.exec_seq for e in b.trace]


def test_block_boundaries_respect_interval():
    res = _run()
    assert len(res.blocks) == 3  # 400 txns at interval 150 -> 150/150/100
    sizes = [len(b.txns) for b in res.blocks]
    assert sum(sizes) == 400
    assert sizes[0] == 150


def test_blocks_chain_from_genesis():
    res = _run()
    assert res.blocks[0].parent_root == res.genesis_root
    for prev, cur in zip(res.blocks, res.blocks[1:]):
        assert cur.parent_root == prev.state_root


def test_full_verify_passes():
    report = verify_result(_run())
    assert report.ok, report.to_text()


def test_empty_delta_window_repeats_root():
    # txns only touch hot accounts; pad the tail window so its block holds
    # zero kept txns and the root must carry over unchanged
    spec = _spec(txn_count=100)
    res = run_pipeline(RunConfig(spec=spec, block_interval=100))
    assert len(res.blocks) == 1
    res2 = run_pipeline(RunConfig(spec=spec, block_interval=100,
                                  inject_divergence=1.0))
    # every txn dropped once: window 1 keeps nothing -> root equals genesis
    first = res2.blocks[0]
    assert first.txns == []
    assert first.state_root == res2.genesis_root
    # retries landed in the second block and the chain still verifies
    assert sum(len(b.txns) for b in res2.blocks) == 100
    assert verify_result(res2).ok


def test_subset_mode_run_verifies():
    res = _run(divergence_mode="subset")
    assert verify_result(res).ok


def test_workload_file_input(tmp_path):
    from frameflow.workload import write_workload

    spec = _spec(txn_count=200)
    path = tmp_path / "wl.bin"
    write_workload(path, spec)
    res = run_pipeline(RunConfig(workload_path=str(path), block_interval=100))
    assert res.spec == spec
    assert res.metrics["counts"]["kept"] == 200


def test_artifacts_round_trip(tmp_path):
    out = tmp_path / "run"
    res = _run(out_dir=str(out))
    for name in ("metrics.json", "blocks.json", "trace.bin"):
        assert (out / name).exists()
    metrics = json.loads((out / "metrics.json").read_text())
    assert metrics["block_roots"] == res.metrics["block_roots"]
    trace = read_trace(str(out / "trace.bin"))
    assert len(trace) == len(res.trace)
    assert trace[0] == res.trace[0]
    report = verify_dir(str(out))
    assert report.ok, report.to_text()


def test_trace_io_round_trip(tmp_path):
    res = _run()
    path = tmp_path / "t.bin"
    write_trace(res.trace, str(path))
    assert read_trace(str(path)) == res.trace


def test_verify_catches_tampered_root(tmp_path):
    out = tmp_path / "run"
    _run(out_dir=str(out))
    chain = json.loads((out / "blocks.json").read_text())
    chain["blocks"][1]["state_root"] = "00" * 32
    (out / "blocks.json").write_text(json.dumps(chain))
    report = verify_dir(str(out))
    assert not report.ok
    failing = [c for c in report.checks if not c.ok]
    assert any("1" in c.detail for c in failing)  # names the bad height


def test_verify_catches_forged_status(tmp_path):
    out = tmp_path / "run"
    _run(out_dir=str(out))
    chain = json.loads((out / "blocks.json").read_text())
    chain["blocks"][0]["txns"][0]["status"] = "insufficient"
    (out / "blocks.json").write_text(json.dumps(chain))
    assert not verify_dir(str(out)).ok


def test_verify_catches_corrupt_trace_interval(tmp_path):
    out = tmp_path / "run"
    res = _run(out_dir=str(out))
    doctored = list(res.trace)
    # find any write-write conflicting pair and clone the first txn's
    # interval onto the second so they overlap
    pair = next(
        ((i, j) for i in range(len(doctored)) for j in range(i + 1, len(doctored))
         if set(doctored[i].writes) & set(doctored[j].writes)),
        None,
    )
    assert pair is not None, "seed produced no conflicting pair"
    i, j = pair
    e, other = doctored[i], doctored[j]
    doctored[j] = type(other)(
        txn_id=other.txn_id, origin_id=other.origin_id,
        attempt=other.attempt, exec_seq=other.exec_seq,
        frame_seq=other.frame_seq, status=other.status,
        reads=other.reads, writes=other.writes,
        start_ns=e.start_ns, end_ns=e.end_ns, worker=other.worker,
    )
    write_trace(doctored, str(out / "trace.bin"))
    report = verify_dir(str(out))
    assert not report.ok
    assert any(c.name == "schedule" and not c.ok for c in report.checks)


def test_injection_accounting_balances():
    res = _run(inject_divergence=0.05)
    c = res.metrics["counts"]
    assert c["dropped"] == c["requeued"]  # retry budget never exhausted here
    assert c["dropped"] > 0
    assert c["kept"] == 400
    assert verify_result(res).ok


def test_echo_run_skips_commitment():
    res = _run(echo_exec=True)
    assert res.genesis_root is None
    assert all(b.state_root is None for b in res.blocks)
    assert res.metrics["counts"]["kept"] == 400
    assert verify_result(res).ok


def test_invalid_config_rejected():
    with pytest.raises(ValueError):
        run_pipeline(RunConfig())  # no workload at all
    with pytest.raises(ValueError):
        RunConfig(spec=_spec(), workers=0).validate()
    with pytest.raises(ValueError):
        RunConfig(spec=_spec(), inject_divergence=2.0).validate()