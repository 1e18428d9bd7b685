import hashlib
import random

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from frameflow.commit import (
    EMPTY_ROOT,
    KeyedCommitment,
    MerkleAccumulator,
    leaf_hash,
    merkle_root,
    node_hash,
)


def test_empty_root_is_domain_tagged():
    assert merkle_root([]) == EMPTY_ROOT
    assert EMPTY_ROOT == hashlib.sha256(b"frameflow-empty-state").digest()


def test_single_leaf_root():
    assert merkle_root([(1, 100)]) == leaf_hash(1, 100)


def test_two_leaf_root():
    want = node_hash(leaf_hash(1, 10), leaf_hash(2, 20))
    assert merkle_root([(1, 10), (2, 20)]) == want


def test_odd_count_duplicates_last():
    l1, l2, l3 = leaf_hash(1, 1), leaf_hash(2, 2), leaf_hash(3, 3)
    want = node_hash(node_hash(l1, l2), node_hash(l3, l3))
    assert merkle_root([(1, 1), (2, 2), (3, 3)]) == want


def test_leaf_and_node_domains_differ():
    # leaf and interior inputs are tagged, so a leaf can't be replayed as a node
    assert leaf_hash(0, 0) != node_hash(b"\x00" * 32, b"\x00" * 32)[:32]
    assert leaf_hash(1, 2) != leaf_hash(2, 1)


def test_value_changes_root():
    a = merkle_root([(1, 10), (2, 20)])
    b = merkle_root([(1, 10), (2, 21)])
    assert a != b


def test_requires_strictly_increasing_keys():
    with pytest.raises(ValueError):
        merkle_root([(2, 1), (1, 1)])
    with pytest.raises(ValueError):
        merkle_root([(1, 1), (1, 2)])


def test_accumulator_matches_full_route():
    items = [(k, k * 3) for k in range(10)]
    acc = MerkleAccumulator([leaf_hash(k, v) for k, v in items])
    assert acc.root == merkle_root(items)


def test_accumulator_update_matches_rebuild():
    rng = random.Random(20)
    n = 37  # odd, multi-level
    values = {k: k for k in range(n)}
    acc = MerkleAccumulator([leaf_hash(k, values[k]) for k in range(n)])
    for _ in range(25):
        batch = {
            rng.randrange(n): rng.randrange(1 << 30)
            for _ in range(rng.randrange(1, 6))
        }
        values.update(batch)
        acc.update_leaves({k: leaf_hash(k, v) for k, v in batch.items()})
        assert acc.root == merkle_root(sorted(values.items()))


@given(
    st.lists(st.integers(min_value=0, max_value=1 << 40), min_size=1, max_size=40,
             unique=True),
    st.data(),
)
@settings(max_examples=40, deadline=None)
def test_incremental_equals_full_property(keys, data):
    keys = sorted(keys)
    kc = KeyedCommitment(np.array(keys, dtype=np.uint64), initial_value=5)
    values = {k: 5 for k in keys}
    assert kc.root == merkle_root(sorted(values.items()))
    for _ in range(3):
        subset = data.draw(st.lists(st.sampled_from(keys), max_size=8))
        batch = {k: data.draw(st.integers(min_value=0, max_value=1 << 50))
                 for k in subset}
        values.update(batch)
        root = kc.refresh(batch)
        assert root == merkle_root(sorted(values.items()))


def test_keyed_commitment_rejects_unknown_key():
    kc = KeyedCommitment(np.array([1, 2, 3], dtype=np.uint64), initial_value=0)
    with pytest.raises(KeyError):
        kc.refresh({99: 1})


def test_empty_refresh_keeps_root():
    kc = KeyedCommitment(np.array([1, 2], dtype=np.uint64), initial_value=9)
    before = kc.root
    assert kc.refresh({}) == before
