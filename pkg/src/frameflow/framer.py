"""Greedy packing of an annotated txn stream into conflict-free frames.

Placement rule: put each txn into the lowest-index admissible slot. If no
slot admits it, finalize the fullest slot (ties to the lowest index), emit it
as a frame, and start the txn in the freed slot. Admissibility is answered by
the Bloom frame pool, or by exact aggregate key sets when configured (the
exact mode exists so runs can price the Bloom false-positive cost).
"""

from __future__ import annotations

from dataclasses import dataclass, field

from frameflow.bloom import DEFAULT_BITS, DEFAULT_HASHES
from frameflow.framepool import MAX_FRAMES, FramePool
from frameflow.model import RWSet, Transaction

BLOOM = "bloom"
EXACT = "exact"


@dataclass(frozen=True)
class FramerConfig:
    n_frames: int = MAX_FRAMES
    bloom_bits: int = DEFAULT_BITS
    bloom_hashes: int = DEFAULT_HASHES
    # Optional eject policies; both default off so packing is driven purely
    # by admissibility. Age is counted in processed-txn ticks.
    max_frame_txns: int | None = None
    max_frame_age: int | None = None
    admissibility: str = BLOOM
    # With shadow_exact the Bloom verdict drives placement while exact sets
    # are tracked alongside, to count false-positive rejections.
    shadow_exact: bool = False

    def __post_init__(self):
        if self.admissibility not in (BLOOM, EXACT):
            raise ValueError(f"unknown admissibility mode {self.admissibility!r}")
        if not 1 <= self.n_frames <= MAX_FRAMES:
            raise ValueError(f"n_frames must be in [1, {MAX_FRAMES}]")
        if self.bloom_bits < 64 or self.bloom_bits & (self.bloom_bits - 1):
            raise ValueError("bloom_bits must be a power of two >= 64")
        if self.bloom_hashes < 1:
            raise ValueError("bloom_hashes must be >= 1")
        if self.max_frame_txns is not None and self.max_frame_txns < 1:
            raise ValueError("max_frame_txns must be >= 1")
        if self.max_frame_age is not None and self.max_frame_age < 1:
            raise ValueError("max_frame_age must be >= 1")


@dataclass
class Frame:
    """An emitted frame: txns that may run concurrently with each other."""

    frame_seq: int
    txns: list[Transaction]
    slot: int

    @property
    def size(self) -> int:
        return len(self.txns)


@dataclass
class FramerMetrics:
    txn_count: int = 0
    frame_count: int = 0
    mean_frame_size: float = 0.0
    midstream_finalizes: int = 0
    age_ejects: int = 0
    cap_ejects: int = 0
    singleton_escapes: int = 0
    # shadow_exact only: slots a Bloom false positive excluded, and txns whose
    # chosen slot differed from what exact admissibility would have chosen.
    fp_slot_exclusions: int = 0
    fp_placement_changes: int = 0


class StreamFramer:
    def __init__(self, cfg: FramerConfig | None = None):
        self.cfg = cfg or FramerConfig()
        n = self.cfg.n_frames
        self._use_bloom = self.cfg.admissibility == BLOOM
        self._track_exact = (not self._use_bloom) or self.cfg.shadow_exact
        self.pool = (
            FramePool(n, self.cfg.bloom_bits, self.cfg.bloom_hashes)
            if self._use_bloom
            else None
        )
        self._slot_txns: list[list[Transaction]] = [[] for _ in range(n)]
        # Exact aggregate sets as an inverted index: key -> bitmask of slots
        # whose aggregate read (write) set holds the key. Per-slot key lists
        # exist so reset can clear the slot's bit everywhere it appears.
        self._rmask: dict[int, int] = {}
        self._wmask: dict[int, int] = {}
        self._slot_rkeys: list[list[int]] = [[] for _ in range(n)]
        self._slot_wkeys: list[list[int]] = [[] for _ in range(n)]
        self._all_slots = (1 << n) - 1
        self._slot_birth = [0] * n
        self._tick = 0
        self._next_seq = 0
        self.metrics = FramerMetrics()
        # A txn whose rw set alone would saturate a slot's filters gets its
        # own frame instead of poisoning a shared slot.
        self._singleton_keys = max(1, self.cfg.bloom_bits // (2 * self.cfg.bloom_hashes))

    # -- public API ------------------------------------------------------

    def feed(self, txn: Transaction) -> list[Frame]:
        """Process one txn; returns frames emitted by this step (often none)."""
        rw = txn.require_annotation()
        self._tick += 1
        out: list[Frame] = []

        if self.cfg.max_frame_age is not None:
            self._eject_aged(out)

        if len(rw.keys) > self._singleton_keys:
            self.metrics.singleton_escapes += 1
            self.metrics.txn_count += 1
            out.append(self._emit([txn], slot=-1))
            return out

        slot = self._place(rw, out)
        self._slot_txns[slot].append(txn)
        if len(self._slot_txns[slot]) == 1:
            self._slot_birth[slot] = self._tick
        if self._use_bloom:
            self.pool.merge(slot, txn.id, rw)
        if self._track_exact:
            bit = 1 << slot
            rmask, wmask = self._rmask, self._wmask
            rkeys, wkeys = self._slot_rkeys[slot], self._slot_wkeys[slot]
            for key in rw.reads:
                rmask[key] = rmask.get(key, 0) | bit
                rkeys.append(key)
            for key in rw.writes:
                wmask[key] = wmask.get(key, 0) | bit
                wkeys.append(key)
        self.metrics.txn_count += 1

        cap = self.cfg.max_frame_txns
        if cap is not None and len(self._slot_txns[slot]) >= cap:
            self.metrics.cap_ejects += 1
            out.append(self._finalize(slot))
        return out

    def flush(self) -> list[Frame]:
        """Emit every occupied slot, ascending slot index."""
        out = []
        for s in range(self.cfg.n_frames):
            if self._slot_txns[s]:
                out.append(self._finalize(s))
        return out

    def snapshot_metrics(self) -> FramerMetrics:
        m = self.metrics
        m.mean_frame_size = m.txn_count / m.frame_count if m.frame_count else 0.0
        return m

    # -- internals -------------------------------------------------------

    def _place(self, rw: RWSet, out: list[Frame]) -> int:
        if self._use_bloom:
            mask = self.pool.admissible_mask(rw)
            if self.cfg.shadow_exact:
                exact = self._exact_mask(rw)
                # One-sided error: Bloom may exclude extra slots, never admit
                # a truly conflicting one.
                assert mask & ~exact == 0, "Bloom admitted a conflicting slot"
                self.metrics.fp_slot_exclusions += (exact & ~mask).bit_count()
                if mask != exact and self._lowest(mask) != self._lowest(exact):
                    self.metrics.fp_placement_changes += 1
        else:
            mask = self._exact_mask(rw)

        if mask:
            return self._lowest(mask)
        slot = self._largest_slot()
        self.metrics.midstream_finalizes += 1
        out.append(self._finalize(slot))
        return slot

    def _exact_mask(self, rw: RWSet) -> int:
        rmask, wmask = self._rmask, self._wmask
        hit = 0
        for key in rw.writes:
            hit |= wmask.get(key, 0) | rmask.get(key, 0)
        for key in rw.reads:
            if key not in rw.writes:
                hit |= wmask.get(key, 0)
        return self._all_slots & ~hit

    @staticmethod
    def _lowest(mask: int) -> int:
        return (mask & -mask).bit_length() - 1 if mask else -1

    def _largest_slot(self) -> int:
        best, best_n = 0, -1
        for s in range(self.cfg.n_frames):
            n = len(self._slot_txns[s])
            if n > best_n:
                best, best_n = s, n
        return best

    def _eject_aged(self, out: list[Frame]) -> None:
        max_age = self.cfg.max_frame_age
        for s in range(self.cfg.n_frames):
            if self._slot_txns[s] and self._tick - self._slot_birth[s] >= max_age:
                self.metrics.age_ejects += 1
                out.append(self._finalize(s))

    def _finalize(self, slot: int) -> Frame:
        txns = self._slot_txns[slot]
        self._slot_txns[slot] = []
        if self._use_bloom:
            ids = self.pool.reset(slot)
            assert ids == [t.id for t in txns]
        if self._track_exact:
            drop = ~(1 << slot)
            for key in set(self._slot_rkeys[slot]):
                left = self._rmask[key] & drop
                if left:
                    self._rmask[key] = left
                else:
                    del self._rmask[key]
            for key in set(self._slot_wkeys[slot]):
                left = self._wmask[key] & drop
                if left:
                    self._wmask[key] = left
                else:
                    del self._wmask[key]
            self._slot_rkeys[slot] = []
            self._slot_wkeys[slot] = []
        return self._emit(txns, slot)

    def _emit(self, txns: list[Transaction], slot: int) -> Frame:
        frame = Frame(self._next_seq, txns, slot)
        self._next_seq += 1
        self.metrics.frame_count += 1
        return frame


def pack_stream(txns, cfg: FramerConfig | None = None) -> list[Frame]:
    """Pack a whole annotated stream and flush. Raises MissingAnnotation on
    any txn without an approximate rw set."""
    framer = StreamFramer(cfg)
    frames: list[Frame] = []
    for t in txns:
        frames.extend(framer.feed(t))
    frames.extend(framer.flush())
    return frames


def framer_metrics(frames) -> FramerMetrics:
    """Counts and mean size over an already-emitted list of frames."""
    m = FramerMetrics()
    m.frame_count = len(frames)
    m.txn_count = sum(f.size for f in frames)
    m.mean_frame_size = m.txn_count / m.frame_count if m.frame_count else 0.0
    return m
