import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from frameflow.framepool import FramePool, InactiveFrameError
from frameflow.model import RWSet, conflicts


def _rand_rw(rng, key_space=10_000, max_keys=6):
    n_r = rng.randrange(max_keys)
    n_w = rng.randrange(max_keys - n_r) if n_r < max_keys else 0
    keys = rng.sample(range(key_space), n_r + n_w)
    return RWSet.of(reads=keys[:n_r], writes=keys[n_r:])


def test_empty_pool_admits_everywhere():
    pool = FramePool(n_frames=8)
    rw = RWSet.of(reads=[1, 2], writes=[3])
    mask = pool.admissible_mask(rw)
    assert mask == (1 << 8) - 1
    assert all(pool.admissible(rw, s) for s in range(8))


def test_mask_agrees_with_scalar_route():
    # the transposed-column mask and the per-slot position-set route are
    # separate implementations; they must never disagree
    rng = random.Random(31)
    pool = FramePool(n_frames=16)
    for txn_id in range(400):
        rw = _rand_rw(rng)
        mask = pool.admissible_mask(rw)
        for slot in range(16):
            assert bool(mask >> slot & 1) == pool.admissible(rw, slot), (
                f"slot {slot} disagrees for txn {txn_id}"
            )
        if mask:
            slot = (mask & -mask).bit_length() - 1
            pool.merge(slot, txn_id, rw)
        else:
            pool.reset(rng.randrange(16))


def test_admissibility_is_one_sided():
    # a Bloom "admissible" verdict must imply true conflict-freedom against
    # everything merged into the slot; exclusions may be spurious, admissions
    # may not
    rng = random.Random(77)
    pool = FramePool(n_frames=4, m_bits=256, k=4)  # small filter, many FPs
    merged: dict[int, list[RWSet]] = {s: [] for s in range(4)}
    for txn_id in range(300):
        rw = _rand_rw(rng, key_space=500, max_keys=4)
        mask = pool.admissible_mask(rw)
        for slot in range(4):
            if mask >> slot & 1:
                assert not any(conflicts(rw, prev) for prev in merged[slot])
        slot = txn_id % 4
        if mask >> slot & 1:
            pool.merge(slot, txn_id, rw)
            merged[slot].append(rw)
        else:
            pool.reset(slot)
            merged[slot] = [rw]
            pool.merge(slot, txn_id, rw)


def test_read_read_sharing_admitted():
    pool = FramePool(n_frames=2)
    pool.merge(0, 1, RWSet.of(reads=[42]))
    assert pool.admissible(RWSet.of(reads=[42]), 0)
    assert not pool.admissible(RWSet.of(writes=[42]), 0)


def test_write_blocks_both_directions():
    pool = FramePool(n_frames=2)
    pool.merge(0, 1, RWSet.of(writes=[7]))
    assert not pool.admissible(RWSet.of(reads=[7]), 0)
    assert not pool.admissible(RWSet.of(writes=[7]), 0)
    assert pool.admissible(RWSet.of(reads=[8], writes=[9]), 0)


def test_reset_returns_ids_and_clears():
    pool = FramePool(n_frames=2)
    pool.merge(1, 10, RWSet.of(writes=[5]))
    pool.merge(1, 11, RWSet.of(reads=[6]))
    assert pool.txn_count(1) == 2
    ids = pool.reset(1)
    assert ids == [10, 11]
    assert pool.txn_count(1) == 0
    assert pool.admissible(RWSet.of(writes=[5]), 1)


def test_inactive_slot_raises():
    pool = FramePool(n_frames=2)
    with pytest.raises(InactiveFrameError):
        pool.merge(2, 1, RWSet.of(reads=[1]))
    with pytest.raises(InactiveFrameError):
        pool.reset(5)


def test_filter_storage_is_32kib_at_defaults():
    pool = FramePool()  # 64 frames, m=2048, k=4
    assert pool.filter_storage_bytes == 2 * 2048 * 8
    assert pool.filter_storage_bytes == 32 * 1024


def test_materialized_filters_match_columns():
    pool = FramePool(n_frames=4)
    rws = [RWSet.of(reads=[i, i + 100], writes=[i + 200]) for i in range(20)]
    for i, rw in enumerate(rws):
        pool.merge(i % 4, i, rw)
    for slot in range(4):
        rf, wf = pool.read_filter(slot), pool.write_filter(slot)
        for i, rw in enumerate(rws):
            if i % 4 != slot:
                continue
            assert all(k in rf for k in rw.reads)
            assert all(k in wf for k in rw.writes)


def test_largest_slot_ties_to_lowest():
    pool = FramePool(n_frames=4)
    pool.merge(2, 0, RWSet.of(writes=[1]))
    pool.merge(1, 1, RWSet.of(writes=[2]))
    assert pool.largest_slot() == 1  # both size 1, lowest index wins


@given(st.integers(min_value=1, max_value=64), st.data())
@settings(max_examples=30, deadline=None)
def test_merge_never_unsets_membership(n_frames, data):
    pool = FramePool(n_frames=n_frames)
    slot = data.draw(st.integers(min_value=0, max_value=n_frames - 1))
    keys = data.draw(
        st.lists(st.integers(min_value=0, max_value=1 << 48), min_size=1, max_size=8)
    )
    for i, key in enumerate(keys):
        pool.merge(slot, i, RWSet.of(writes=[key]))
        assert all(not pool.admissible(RWSet.of(reads=[k]), slot) for k in keys[: i + 1])
