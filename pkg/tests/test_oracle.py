import random

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from frameflow.engine import ExecStatus, balance_key
from frameflow.model import Kind, RWSet, Transaction, TransferOp
from frameflow.oracle import (
    EXACT_INSTANCE_CAP,
    OracleStore,
    check_schedule,
    critical_path_length,
    exact_precedence_graph,
    exact_tlp,
    longest_path_from_edges,
    serial_execute,
)
from frameflow.scheduler import TraceEntry


def _entry(seq, reads=(), writes=(), start=0, end=1):
    return TraceEntry(
        txn_id=seq, origin_id=None, attempt=0, exec_seq=seq, frame_seq=0,
        status=ExecStatus.OK, reads=tuple(reads), writes=tuple(writes),
        start_ns=start, end_ns=end, worker=0,
    )


def _rand_rws(rng, n, key_space=30):
    out = []
    for _ in range(n):
        keys = rng.sample(range(key_space), rng.randrange(1, 4))
        cut = rng.randrange(len(keys) + 1)
        out.append(RWSet.of(reads=keys[:cut], writes=keys[cut:]))
    return out


def test_serial_execute_applies_in_order():
    keys = np.sort(np.array([balance_key(1), balance_key(2)], dtype=np.uint64))
    txns = [
        Transaction(id=0, op=TransferOp(Kind.NATIVE, 1, 2, 60)),
        Transaction(id=1, op=TransferOp(Kind.NATIVE, 1, 2, 60)),
    ]
    store, root, statuses = serial_execute(txns, keys, base_value=100)
    assert statuses == [ExecStatus.OK, ExecStatus.INSUFFICIENT]
    assert store.get(balance_key(1)) == 40
    assert store.get(balance_key(2)) == 160
    assert len(root) == 32


def test_oracle_store_overlay_and_root():
    keys = np.array([1, 5, 9], dtype=np.uint64)
    store = OracleStore(keys, 10)
    assert store.get(5) == 10
    assert store.get(4) == 0
    store.set(5, 11)
    store.set(200, 3)  # outside base universe still representable
    items = store.items_sorted()
    assert items == [(1, 10), (5, 11), (9, 10), (200, 3)]


def test_precedence_graph_triangle():
    # 3 writers of one slot: path edges plus the transitive one
    rws = [RWSet.of(writes=[1])] * 3
    assert exact_precedence_graph(rws) == [(0, 1), (0, 2), (1, 2)]


def test_precedence_graph_read_read_free():
    rws = [RWSet.of(reads=[1]), RWSet.of(reads=[1])]
    assert exact_precedence_graph(rws) == []


def test_precedence_graph_cap():
    rws = [RWSet.of() for _ in range(EXACT_INSTANCE_CAP + 1)]
    with pytest.raises(ValueError):
        exact_precedence_graph(rws)


def test_critical_path_reader_fan():
    rws = [
        RWSet.of(writes=[1]),
        RWSet.of(reads=[1]),
        RWSet.of(reads=[1]),
        RWSet.of(writes=[1]),
    ]
    assert critical_path_length(rws) == 3
    edges = exact_precedence_graph(rws)
    assert longest_path_from_edges(4, edges) == 3


def test_critical_path_matches_edge_route_randomized():
    rng = random.Random(40)
    for trial in range(20):
        rws = _rand_rws(rng, 100)
        dp = critical_path_length(rws)
        brute = longest_path_from_edges(100, exact_precedence_graph(rws))
        assert dp == brute, f"trial {trial}: dp {dp} vs brute {brute}"


@given(st.data())
@settings(max_examples=40, deadline=None)
def test_critical_path_property(data):
    n = data.draw(st.integers(min_value=1, max_value=30))
    rws = []
    for _ in range(n):
        reads = data.draw(st.sets(st.integers(0, 8), max_size=3))
        writes = data.draw(st.sets(st.integers(0, 8), max_size=3))
        rws.append(RWSet.of(reads=reads, writes=writes))
    dp = critical_path_length(rws)
    assert dp == longest_path_from_edges(n, exact_precedence_graph(rws))
    assert 0 <= dp <= n


def test_exact_tlp_bounds():
    disjoint = [RWSet.of(writes=[i]) for i in range(10)]
    assert exact_tlp(disjoint) == 10.0
    serial = [RWSet.of(writes=[1]) for _ in range(10)]
    assert exact_tlp(serial) == 1.0


def test_check_schedule_accepts_serialized_overlaps():
    entries = [
        _entry(0, writes=[1], start=0, end=10),
        _entry(1, writes=[1], start=10, end=20),  # touching endpoints are fine
        _entry(2, reads=[1], start=25, end=30),
    ]
    assert check_schedule(entries) is None


def test_check_schedule_flags_write_write_overlap():
    entries = [
        _entry(0, writes=[1], start=0, end=10),
        _entry(1, writes=[1], start=5, end=15),
    ]
    v = check_schedule(entries)
    assert v is not None
    assert (v.first_seq, v.second_seq) == (0, 1)
    assert v.key == 1


def test_check_schedule_flags_out_of_order_execution():
    # seq 1 conflicts with seq 0 but ran entirely before it
    entries = [
        _entry(0, writes=[1], start=50, end=60),
        _entry(1, writes=[1], start=0, end=10),
    ]
    assert check_schedule(entries) is not None


def test_check_schedule_allows_concurrent_readers():
    entries = [
        _entry(0, reads=[1], start=0, end=10),
        _entry(1, reads=[1], start=3, end=8),
    ]
    assert check_schedule(entries) is None


def test_check_schedule_rejects_negative_interval():
    entries = [_entry(0, writes=[1], start=10, end=5)]
    assert check_schedule(entries) is not None
