"""Pool of in-flight frames with bit-transposed Bloom filters.

Each of up to 64 pool slots owns a read filter and a write filter. Instead of
storing each filter as its own bit array, the pool stores one 64-bit word per
filter bit position: bit s of read_cols[p] says "slot s has read-filter bit p
set". One admissibility query then probes k columns per key and answers for
all slots at once with a handful of word ops. At 64 slots and 2048-bit
filters the whole pool is 2 * 2048 words = 32 KiB of filter state.
"""

from __future__ import annotations

from frameflow.bloom import DEFAULT_BITS, DEFAULT_HASHES, BloomFilter, probe_positions
from frameflow.model import RWSet

MAX_FRAMES = 64


class InactiveFrameError(RuntimeError):
    """Raised when a slot outside the pool's active set is addressed."""


class FramePool:
    def __init__(
        self,
        n_frames: int = MAX_FRAMES,
        m_bits: int = DEFAULT_BITS,
        k: int = DEFAULT_HASHES,
    ):
        if not 1 <= n_frames <= MAX_FRAMES:
            raise ValueError(f"n_frames must be in [1, {MAX_FRAMES}], got {n_frames}")
        if m_bits <= 0 or m_bits & (m_bits - 1):
            raise ValueError(f"m_bits must be a positive power of two, got {m_bits}")
        self.n_frames = n_frames
        self.m_bits = m_bits
        self.k = k
        self.active_mask = (1 << n_frames) - 1
        self.read_cols = [0] * m_bits
        self.write_cols = [0] * m_bits
        # Per-slot set bit positions, kept so reset is O(frame keys) and so the
        # scalar admissible() check runs on a second, independent representation.
        self._read_positions: list[set[int]] = [set() for _ in range(n_frames)]
        self._write_positions: list[set[int]] = [set() for _ in range(n_frames)]
        self._txn_ids: list[list[int]] = [[] for _ in range(n_frames)]

    # -- queries ---------------------------------------------------------

    def admissible_mask(self, rw: RWSet) -> int:
        """Bitmask of active slots rw may join without conflicting.

        A slot is excluded when any read key may be in its write filter, or
        any write key may be in either filter. Bloom error is one-sided:
        false positives over-exclude, a true conflict is never admitted.
        """
        m, k = self.m_bits, self.k
        rcols, wcols = self.read_cols, self.write_cols
        hit = 0
        for key in rw.writes:
            pos = probe_positions(key, m, k)
            acc_w = wcols[pos[0]]
            acc_r = rcols[pos[0]]
            for p in pos[1:]:
                acc_w &= wcols[p]
                acc_r &= rcols[p]
            hit |= acc_w | acc_r
        for key in rw.reads:
            if key in rw.writes:
                continue
            pos = probe_positions(key, m, k)
            acc_w = wcols[pos[0]]
            for p in pos[1:]:
                acc_w &= wcols[p]
            hit |= acc_w
        return self.active_mask & ~hit

    def admissible(self, rw: RWSet, slot: int) -> bool:
        """Scalar admissibility for one slot, answered from the per-slot
        position sets rather than the transposed columns. Raises on a slot
        outside the active set."""
        self._check_active(slot)
        wpos = self._write_positions[slot]
        rpos = self._read_positions[slot]
        m, k = self.m_bits, self.k
        for key in rw.writes:
            pos = probe_positions(key, m, k)
            if all(p in wpos for p in pos):
                return False
            if all(p in rpos for p in pos):
                return False
        for key in rw.reads:
            if key in rw.writes:
                continue
            pos = probe_positions(key, m, k)
            if all(p in wpos for p in pos):
                return False
        return True

    # -- mutation --------------------------------------------------------

    def merge(self, slot: int, txn_id: int, rw: RWSet) -> None:
        """Fold rw into slot's filters and record the txn id."""
        self._check_active(slot)
        bit = 1 << slot
        m, k = self.m_bits, self.k
        rcols, wcols = self.read_cols, self.write_cols
        rpos, wpos = self._read_positions[slot], self._write_positions[slot]
        for key in rw.reads:
            for p in probe_positions(key, m, k):
                rcols[p] |= bit
                rpos.add(p)
        for key in rw.writes:
            for p in probe_positions(key, m, k):
                wcols[p] |= bit
                wpos.add(p)
        self._txn_ids[slot].append(txn_id)

    def reset(self, slot: int) -> list[int]:
        """Clear slot's filters and return the txn ids it held."""
        self._check_active(slot)
        keep = ~(1 << slot)
        rcols, wcols = self.read_cols, self.write_cols
        for p in self._read_positions[slot]:
            rcols[p] &= keep
        for p in self._write_positions[slot]:
            wcols[p] &= keep
        self._read_positions[slot] = set()
        self._write_positions[slot] = set()
        ids = self._txn_ids[slot]
        self._txn_ids[slot] = []
        return ids

    # -- inspection ------------------------------------------------------

    def txn_count(self, slot: int) -> int:
        self._check_active(slot)
        return len(self._txn_ids[slot])

    def txn_ids(self, slot: int) -> list[int]:
        self._check_active(slot)
        return list(self._txn_ids[slot])

    def largest_slot(self) -> int:
        """Active slot with the most txns; ties break to the lowest index."""
        best, best_n = -1, -1
        for s in range(self.n_frames):
            if self.active_mask >> s & 1:
                n = len(self._txn_ids[s])
                if n > best_n:
                    best, best_n = s, n
        if best < 0:
            raise InactiveFrameError("pool has no active slots")
        return best

    def occupied_slots(self) -> list[int]:
        return [
            s
            for s in range(self.n_frames)
            if self.active_mask >> s & 1 and self._txn_ids[s]
        ]

    def read_filter(self, slot: int) -> BloomFilter:
        """Slot's read filter materialized as a standalone BloomFilter."""
        return self._materialize(slot, self._read_positions[slot])

    def write_filter(self, slot: int) -> BloomFilter:
        return self._materialize(slot, self._write_positions[slot])

    @property
    def filter_storage_bytes(self) -> int:
        """Bytes of transposed filter state: 2 * m_bits 64-bit words."""
        return 2 * self.m_bits * 8

    def _materialize(self, slot: int, positions: set[int]) -> BloomFilter:
        self._check_active(slot)
        f = BloomFilter(self.m_bits, self.k)
        bits = 0
        for p in positions:
            bits |= 1 << p
        f._bits = bits
        return f

    def _check_active(self, slot: int) -> None:
        if not 0 <= slot < self.n_frames or not (self.active_mask >> slot & 1):
            raise InactiveFrameError(f"slot {slot} is not active")
