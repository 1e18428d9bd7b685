import pytest

from frameflow.model import (
    MAX_ACCOUNT,
    Kind,
    MalformedTransaction,
    MissingAnnotation,
    RWSet,
    Transaction,
    TransferOp,
    conflicts,
    key_from_bytes,
    key_to_bytes,
)


def test_key_round_trip():
    for key in (0, 1, 0xDEADBEEF, (1 << 64) - 1):
        assert key_from_bytes(key_to_bytes(key)) == key


def test_key_bytes_big_endian():
    assert key_to_bytes(1) == b"\x00" * 7 + b"\x01"
    assert len(key_to_bytes(0)) == 8


def test_rwset_of_normalizes():
    rw = RWSet.of(reads=[3, 1, 3], writes=[2])
    assert rw.reads == frozenset({1, 3})
    assert rw.writes == frozenset({2})
    assert rw.keys == frozenset({1, 2, 3})


def test_rwset_empty():
    assert RWSet.of().is_empty
    assert not RWSet.of(reads=[1]).is_empty


# read-read overlap must not conflict; any write overlap must
@pytest.mark.parametrize(
    "a, b, want",
    [
        (RWSet.of(reads=[1]), RWSet.of(reads=[1]), False),
        (RWSet.of(writes=[1]), RWSet.of(reads=[1]), True),
        (RWSet.of(reads=[1]), RWSet.of(writes=[1]), True),
        (RWSet.of(writes=[1]), RWSet.of(writes=[1]), True),
        (RWSet.of(reads=[1], writes=[2]), RWSet.of(reads=[3], writes=[4]), False),
        (RWSet.of(), RWSet.of(writes=[9]), False),
    ],
)
def test_conflicts_table(a, b, want):
    assert conflicts(a, b) is want
    assert conflicts(b, a) is want


def test_self_conflict_iff_writes():
    writer = RWSet.of(reads=[1], writes=[2])
    reader = RWSet.of(reads=[1, 2])
    assert conflicts(writer, writer)
    assert not conflicts(reader, reader)


def test_transfer_op_validate_ok():
    TransferOp(Kind.NATIVE, 0, MAX_ACCOUNT, 10).validate()
    TransferOp(Kind.ERC20, 5, 6, 0).validate()


@pytest.mark.parametrize(
    "sender, receiver, amount",
    [
        (1, 1, 5),  # self transfer
        (-1, 2, 5),
        (1, MAX_ACCOUNT + 1, 5),
        (1, 2, -1),
    ],
)
def test_transfer_op_validate_rejects(sender, receiver, amount):
    with pytest.raises(MalformedTransaction):
        TransferOp(Kind.NATIVE, sender, receiver, amount).validate()


def test_transfer_op_rejects_bad_kind():
    with pytest.raises(MalformedTransaction):
        TransferOp(7, 1, 2, 3).validate()


def test_transaction_annotation_gate():
    txn = Transaction(id=0, op=TransferOp(Kind.NATIVE, 1, 2, 3))
    with pytest.raises(MissingAnnotation):
        txn.require_annotation()
    txn.approx_rw = RWSet.of(reads=[1])
    assert txn.require_annotation() is txn.approx_rw


def test_transaction_defaults():
    txn = Transaction(id=9, op=TransferOp(Kind.NATIVE, 1, 2, 3))
    assert txn.attempt == 0
    assert txn.origin_id is None
    assert txn.exec_seq is None
    assert not txn.inject_divergence
