"""Bloom filters over storage keys, with the double-hashing probe sequence
shared by the scalar filter and the bit-transposed frame pool."""

from __future__ import annotations

import math
from functools import lru_cache

DEFAULT_BITS = 2048
DEFAULT_HASHES = 4

_MASK64 = (1 << 64) - 1


def _splitmix64(x: int) -> int:
    """One splitmix64 round; cheap avalanche over a 64-bit lane."""
    x = (x + 0x9E3779B97F4A7C15) & _MASK64
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & _MASK64
    return x ^ (x >> 31)


@lru_cache(maxsize=1 << 16)
def probe_positions(key: int, m_bits: int, k: int) -> tuple[int, ...]:
    """k bit positions for key, via double hashing h1 + j*h2 (h2 forced odd).

    m_bits must be a power of two so the modulo is a mask. Cached: skewed
    workloads probe the same hot keys constantly.
    """
    h1 = _splitmix64(key & _MASK64)
    h2 = _splitmix64(h1) | 1
    mask = m_bits - 1
    return tuple((h1 + j * h2) & mask for j in range(k))


def expected_fp_rate(n_keys: int, m_bits: int, k: int) -> float:
    """Analytic false-positive probability (1 - e^{-kn/m})^k."""
    if n_keys <= 0:
        return 0.0
    return (1.0 - math.exp(-k * n_keys / m_bits)) ** k


class BloomFilter:
    """Fixed-size Bloom filter. The bit array is a Python int, so insert is a
    mask OR and membership is a mask AND; both are single big-int ops."""

    __slots__ = ("m_bits", "k", "_bits", "_n_inserted")

    def __init__(self, m_bits: int = DEFAULT_BITS, k: int = DEFAULT_HASHES):
        if m_bits <= 0 or m_bits & (m_bits - 1):
            raise ValueError(f"m_bits must be a positive power of two, got {m_bits}")
        if k <= 0:
            raise ValueError(f"k must be positive, got {k}")
        self.m_bits = m_bits
        self.k = k
        self._bits = 0
        self._n_inserted = 0

    def _mask(self, key: int) -> int:
        m = 0
        for pos in probe_positions(key, self.m_bits, self.k):
            m |= 1 << pos
        return m

    def insert(self, key: int) -> None:
        self._bits |= self._mask(key)
        self._n_inserted += 1

    def maybe_contains(self, key: int) -> bool:
        """False means definitely absent; True may be a false positive."""
        m = self._mask(key)
        return (self._bits & m) == m

    def clear(self) -> None:
        self._bits = 0
        self._n_inserted = 0

    @property
    def bit_count(self) -> int:
        return self._bits.bit_count()

    @property
    def n_inserted(self) -> int:
        return self._n_inserted

    @property
    def size_bytes(self) -> int:
        return self.m_bits // 8

    def to_bytes(self) -> bytes:
        return self._bits.to_bytes(self.size_bytes, "little")

    @classmethod
    def from_bytes(cls, raw: bytes, k: int = DEFAULT_HASHES) -> "BloomFilter":
        f = cls(len(raw) * 8, k)
        f._bits = int.from_bytes(raw, "little")
        return f

    def __contains__(self, key: int) -> bool:
        return self.maybe_contains(key)

    def __eq__(self, other) -> bool:
        if not isinstance(other, BloomFilter):
            return NotImplemented
        return (self.m_bits, self.k, self._bits) == (other.m_bits, other.k, other._bits)

    def __repr__(self) -> str:
        return f"BloomFilter(m_bits={self.m_bits}, k={self.k}, set={self.bit_count})"
