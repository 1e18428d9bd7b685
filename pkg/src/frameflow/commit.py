"""State commitment: sha256 binary Merkle tree over sorted (key, value) slots.

Leaves are hashed with a domain tag and fixed-width encodings; an odd node at
any level pairs with itself. Two routes produce roots: merkle_root builds the
tree from scratch (the oracle path), MerkleAccumulator keeps every level
resident and rehashes only dirty paths (the pipeline path). Block equality of
the two is one of the standing cross-checks.
"""

from __future__ import annotations

import hashlib

import numpy as np

_LEAF_TAG = b"L"
_NODE_TAG = b"N"
HASH_BYTES = 32

EMPTY_ROOT = hashlib.sha256(b"frameflow-empty-state").digest()


def leaf_hash(key: int, value: int) -> bytes:
    return hashlib.sha256(
        _LEAF_TAG + key.to_bytes(8, "big") + value.to_bytes(16, "big")
    ).digest()


def node_hash(left: bytes, right: bytes) -> bytes:
    return hashlib.sha256(_NODE_TAG + left + right).digest()


def merkle_root(items) -> bytes:
    """Root over (key, value) pairs that must arrive sorted by key."""
    level = []
    prev_key = -1
    for key, value in items:
        if key <= prev_key:
            raise ValueError("merkle_root requires strictly increasing keys")
        prev_key = key
        level.append(leaf_hash(key, value))
    if not level:
        return EMPTY_ROOT
    while len(level) > 1:
        nxt = []
        for i in range(0, len(level) - 1, 2):
            nxt.append(node_hash(level[i], level[i + 1]))
        if len(level) & 1:
            nxt.append(node_hash(level[-1], level[-1]))
        level = nxt
    return level[0]


class MerkleAccumulator:
    """Tree with all levels resident, for cheap dirty-path refresh.

    Levels store nodes as one bytearray each (32 bytes per node), leaf level
    first. Memory is ~2x the leaf level.
    """

    def __init__(self, leaves: list[bytes]):
        if not leaves:
            self._levels: list[bytearray] = []
            return
        level = bytearray(b"".join(leaves))
        levels = [level]
        while len(level) > HASH_BYTES:
            level = self._build_parent(level)
            levels.append(level)
        self._levels = levels

    @staticmethod
    def _build_parent(level: bytearray) -> bytearray:
        n = len(level) // HASH_BYTES
        parent = bytearray(((n + 1) // 2) * HASH_BYTES)
        h = hashlib.sha256
        for i in range(0, n - 1, 2):
            lo = i * HASH_BYTES
            parent[(i // 2) * HASH_BYTES : (i // 2 + 1) * HASH_BYTES] = h(
                _NODE_TAG + bytes(level[lo : lo + 2 * HASH_BYTES])
            ).digest()
        if n & 1:
            last = bytes(level[(n - 1) * HASH_BYTES : n * HASH_BYTES])
            parent[-HASH_BYTES:] = node_hash(last, last)
        return parent

    @property
    def root(self) -> bytes:
        if not self._levels:
            return EMPTY_ROOT
        return bytes(self._levels[-1])

    @property
    def n_leaves(self) -> int:
        return len(self._levels[0]) // HASH_BYTES if self._levels else 0

    def leaf(self, idx: int) -> bytes:
        return bytes(self._levels[0][idx * HASH_BYTES : (idx + 1) * HASH_BYTES])

    def update_leaves(self, updates: dict[int, bytes]) -> bytes:
        """Replace leaves by index and rehash affected paths; returns root."""
        if not updates:
            return self.root
        level0 = self._levels[0]
        n0 = len(level0) // HASH_BYTES
        dirty = set()
        for idx, digest in updates.items():
            if not 0 <= idx < n0:
                raise IndexError(f"leaf index {idx} out of range")
            if len(digest) != HASH_BYTES:
                raise ValueError("leaf digest must be 32 bytes")
            level0[idx * HASH_BYTES : (idx + 1) * HASH_BYTES] = digest
            dirty.add(idx >> 1)
        for depth in range(1, len(self._levels)):
            child = self._levels[depth - 1]
            cur = self._levels[depth]
            n_child = len(child) // HASH_BYTES
            next_dirty = set()
            for i in dirty:
                lo = 2 * i * HASH_BYTES
                if 2 * i + 1 < n_child:
                    digest = hashlib.sha256(
                        _NODE_TAG + bytes(child[lo : lo + 2 * HASH_BYTES])
                    ).digest()
                else:
                    solo = bytes(child[lo : lo + HASH_BYTES])
                    digest = node_hash(solo, solo)
                cur[i * HASH_BYTES : (i + 1) * HASH_BYTES] = digest
                next_dirty.add(i >> 1)
            dirty = next_dirty
        return self.root


class KeyedCommitment:
    """Incremental commitment bound to a fixed, sorted key universe.

    The pipeline's slot universe is closed once the workload is prefunded, so
    the tree shape never changes; only values move. refresh() takes the
    (key, value) pairs written since the last block.
    """

    def __init__(self, keys: np.ndarray, initial_value: int):
        keys = np.ascontiguousarray(keys, dtype=np.uint64)
        if keys.size > 1 and not (keys[1:] > keys[:-1]).all():
            raise ValueError("commitment keys must be strictly increasing")
        self._keys = keys
        self._acc = MerkleAccumulator(
            [leaf_hash(int(k), initial_value) for k in keys.tolist()]
        )

    @property
    def root(self) -> bytes:
        return self._acc.root

    def index_of(self, key: int) -> int:
        i = int(np.searchsorted(self._keys, np.uint64(key)))
        if i >= self._keys.size or int(self._keys[i]) != key:
            raise KeyError(f"key {key} not in commitment universe")
        return i

    def refresh(self, written: dict[int, int]) -> bytes:
        """Apply {key: new_value} and return the new root."""
        updates = {
            self.index_of(key): leaf_hash(key, value) for key, value in written.items()
        }
        return self._acc.update_leaves(updates)
