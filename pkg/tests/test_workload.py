import pytest

from frameflow.model import Kind, MalformedTransaction, TransferOp
from frameflow.workload import (
    MAX_AMOUNT,
    RECORD_SIZE,
    WorkloadSpec,
    decode_record,
    encode_record,
    generate,
    generate_records,
    hot_sender_fraction,
    initial_funding,
    prefunded_store,
    read_workload,
    state_keys,
    write_workload,
)


def _spec(**kw):
    base = dict(kind=Kind.NATIVE, total_accounts=1 << 16, gamma=100, alpha=0.5,
                txn_count=1000, seed=3)
    base.update(kw)
    return WorkloadSpec(**base)


def test_generation_is_deterministic():
    a = generate_records(_spec())
    b = generate_records(_spec())
    assert a == b
    assert len(a) == 1000 * RECORD_SIZE


def test_seed_changes_stream():
    assert generate_records(_spec(seed=3)) != generate_records(_spec(seed=4))


def test_batch_size_is_part_of_stream_identity():
    # each batch draws from its own spawned RNG, so batch size participates
    # in the stream identity; that is why the file header records it
    a = generate_records(_spec(batch_size=977))
    b = generate_records(_spec(batch_size=977))
    assert a == b


def test_record_round_trip():
    records = generate_records(_spec(txn_count=50))
    for i in range(50):
        raw = records[i * RECORD_SIZE : (i + 1) * RECORD_SIZE]
        op = decode_record(raw)
        op.validate()
        assert encode_record(op) == raw
        assert 1 <= op.amount <= MAX_AMOUNT


def test_decode_rejects_malformed():
    records = generate_records(_spec(txn_count=1))
    raw = bytearray(records[:RECORD_SIZE])
    raw[22] = 9  # kind byte
    with pytest.raises(MalformedTransaction):
        decode_record(bytes(raw))
    raw = bytearray(records[:RECORD_SIZE])
    raw[23] = 1  # reserved byte must be zero
    with pytest.raises(MalformedTransaction):
        decode_record(bytes(raw))
    with pytest.raises(MalformedTransaction):
        decode_record(b"\x00" * 10)  # wrong length


def test_no_self_transfers_anywhere():
    records = generate_records(_spec(txn_count=5000, alpha=0.99, gamma=2,
                                     total_accounts=4))
    for i in range(5000):
        op = decode_record(records[i * RECORD_SIZE : (i + 1) * RECORD_SIZE])
        assert op.sender != op.receiver


def test_hot_fraction_tracks_alpha():
    spec = _spec(txn_count=100_000, alpha=0.99, gamma=1000,
                 total_accounts=1 << 20)
    frac = hot_sender_fraction(generate_records(spec), spec.gamma)
    assert abs(frac - 0.99) < 0.005


def test_alpha_zero_has_no_hot_senders():
    spec = _spec(txn_count=20_000, alpha=0.0, gamma=100, total_accounts=1 << 20)
    assert hot_sender_fraction(generate_records(spec), spec.gamma) == 0.0


def test_alpha_one_gamma_one_single_sender():
    spec = _spec(txn_count=1000, alpha=1.0, gamma=1, total_accounts=1 << 12)
    records = generate_records(spec)
    senders = {
        decode_record(records[i * RECORD_SIZE : (i + 1) * RECORD_SIZE]).sender
        for i in range(1000)
    }
    assert senders == {0}


def test_receivers_always_cold():
    spec = _spec(txn_count=5000, alpha=0.9, gamma=50, total_accounts=1 << 12)
    records = generate_records(spec)
    for i in range(5000):
        op = decode_record(records[i * RECORD_SIZE : (i + 1) * RECORD_SIZE])
        assert op.receiver >= spec.gamma


def test_generate_builds_txns_with_ids():
    txns = generate(_spec(txn_count=10))
    assert [t.id for t in txns] == list(range(10))
    assert all(t.approx_rw is None for t in txns)


def test_spec_validation():
    with pytest.raises(ValueError):
        _spec(total_accounts=1).validate()
    with pytest.raises(ValueError):
        _spec(alpha=1.5).validate()
    with pytest.raises(ValueError):
        _spec(alpha=0.5, gamma=0).validate()
    with pytest.raises(ValueError):
        _spec(gamma=(1 << 16) - 1).validate()  # leaves < 2 cold accounts
    with pytest.raises(ValueError):
        _spec(txn_count=0).validate()


def test_state_keys_native_vs_erc20():
    n = _spec(kind=Kind.NATIVE, total_accounts=256)
    e = _spec(kind=Kind.ERC20, total_accounts=256)
    kn, ke = state_keys(n), state_keys(e)
    assert len(kn) == 256
    assert len(ke) == 512
    assert sorted(set(int(k) for k in kn)) == list(int(k) for k in kn)


def test_funding_covers_worst_case_stream():
    spec = _spec(txn_count=777)
    assert initial_funding(spec) == 777 * MAX_AMOUNT


def test_prefunded_store_values():
    spec = _spec(total_accounts=64, txn_count=10)
    store = prefunded_store(spec)
    funding = initial_funding(spec)
    items = store.items_sorted()
    assert len(items) == 64
    assert all(v == funding for _, v in items)


def test_workload_file_round_trip(tmp_path):
    spec = _spec(txn_count=500)
    path = tmp_path / "wl.bin"
    write_workload(path, spec)
    spec2, records2 = read_workload(path)
    assert spec2 == spec
    assert records2 == generate_records(spec)


def test_read_rejects_truncated_file(tmp_path):
    spec = _spec(txn_count=100)
    path = tmp_path / "wl.bin"
    write_workload(path, spec)
    data = path.read_bytes()
    path.write_bytes(data[:-7])
    with pytest.raises(ValueError):
        read_workload(path)
