"""Bloom filter digest of a trust store.

Positions are ``murmur3_32(digest, seed) mod m`` for seeds ``0..k-1``. The
bit array is held as a Python int (bit ``i`` of the int is filter bit ``i``),
which serialises little-endian to the wire layout: bit ``i`` lives in byte
``i // 8`` at position ``i % 8``.
"""

from __future__ import annotations

import math
from functools import lru_cache
from itertools import repeat
from typing import Iterable

import mmh3
import numpy as np

from .errors import DecodeError, InvalidInputError

DEFAULT_BITS = 512
DEFAULT_HASHES = 3

_hash32 = mmh3.mmh3_32_uintdigest


class BloomFilter:
    __slots__ = ("m", "k", "_bits", "count", "_table")

    def __init__(self, m_bits: int = DEFAULT_BITS, k: int = DEFAULT_HASHES) -> None:
        if m_bits < 8 or k < 1:
            raise InvalidInputError(f"need m_bits >= 8 and k >= 1, got m={m_bits}, k={k}")
        self.m = m_bits
        self.k = k
        self._bits = 0
        self.count = 0
        self._table = None

    @property
    def bits(self) -> int:
        return self._bits

    @bits.setter
    def bits(self, value: int) -> None:
        self._bits = value
        self._table = None

    def positions(self, digest: bytes) -> list[int]:
        m = self.m
        return [_hash32(digest, seed) % m for seed in range(self.k)]

    def insert(self, digest: bytes) -> None:
        m, bits = self.m, self.bits
        for seed in range(self.k):
            bits |= 1 << (_hash32(digest, seed) % m)
        self.bits = bits
        self.count += 1

    def query(self, digest: bytes) -> bool:
        m, bits = self.m, self._bits
        for seed in range(self.k):
            if not (bits >> (_hash32(digest, seed) % m)) & 1:
                return False
        return True

    __contains__ = query

    def _lookup(self) -> np.ndarray:
        table = self._table
        if table is None:
            raw = np.frombuffer(self.to_bytes(), dtype=np.uint8)
            table = self._table = np.unpackbits(raw, bitorder="little")[:self.m].astype(bool)
        return table

    def select_absent(self, items) -> list:
        """Items whose ``.digest`` is definitely not in the filter.

        Every digest is hashed ``k`` times on every call; only the bit lookup
        table is cached between calls.
        """
        items = list(items)
        count = len(items)
        if count < 32:
            m, bits, h, seeds = self.m, self._bits, _hash32, range(self.k)
            return [item for item in items
                    if not all((bits >> (h(item.digest, s) % m)) & 1 for s in seeds)]
        table = self._lookup()
        digests = [item.digest for item in items]
        present = np.ones(count, dtype=bool)
        for seed in range(self.k):
            pos = np.fromiter(map(_hash32, digests, repeat(seed, count)),
                              dtype=np.int64, count=count)
            present &= table[pos % self.m]
        return [items[i] for i in np.flatnonzero(~present).tolist()]

    def popcount(self) -> int:
        return bin(self.bits).count("1")

    @property
    def size_bytes(self) -> int:
        return (self.m + 7) // 8

    def to_bytes(self) -> bytes:
        return self.bits.to_bytes(self.size_bytes, "little")

    @classmethod
    def from_bytes(cls, data: bytes, k: int = DEFAULT_HASHES) -> "BloomFilter":
        """Rebuild from the raw bit array. ``count`` is not carried on the wire and reads 0."""
        if not data:
            raise DecodeError("empty filter")
        f = cls(len(data) * 8, k)
        f.bits = int.from_bytes(data, "little")
        return f

    def copy(self) -> "BloomFilter":
        clone = BloomFilter(self.m, self.k)
        clone.bits = self.bits
        clone.count = self.count
        return clone

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, BloomFilter):
            return NotImplemented
        return (self.m, self.k, self.bits) == (other.m, other.k, other.bits)

    def __repr__(self) -> str:
        return f"BloomFilter(m={self.m}, k={self.k}, set={self.popcount()}, count={self.count})"


@lru_cache(maxsize=1 << 18)
def _mask(digest: bytes, m_bits: int, k: int) -> int:
    bits = 0
    for seed in range(k):
        bits |= 1 << (_hash32(digest, seed) % m_bits)
    return bits


def bloom_from_digests(digests: Iterable[bytes], m_bits: int = DEFAULT_BITS,
                       k: int = DEFAULT_HASHES) -> BloomFilter:
    # building a filter memoises per-digest bit masks; queries always rehash
    f = BloomFilter(m_bits, k)
    bits, count = 0, 0
    for d in digests:
        bits |= _mask(d, m_bits, k)
        count += 1
    f.bits = bits
    f.count = count
    return f


def bloom_from_store(store, now: int | None = None, m_bits: int = DEFAULT_BITS,
                     k: int = DEFAULT_HASHES) -> BloomFilter:
    """Fresh filter holding the digest of every entry in ``store`` still valid at ``now``."""
    return bloom_from_digests(
        (e.digest for e in store if now is None or e.policy.valid_at(now)), m_bits, k)


def bloom_fp_estimate(m: int, k: int, n: int) -> float:
    """Standard false-positive approximation ``(1 - exp(-k n / m)) ** k``."""
    if m < 1 or k < 1 or n < 0:
        raise InvalidInputError(f"invalid parameters m={m}, k={k}, n={n}")
    return (1.0 - math.exp(-k * n / m)) ** k
