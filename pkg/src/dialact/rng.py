"""Deterministic cross-platform random numbers.

xoshiro256++ with splitmix64 seeding, both straight from the published
reference implementations. Two generators built from the same 64-bit seed
emit identical streams on every platform, which is what makes checkpoint
hashes reproducible.
"""

from __future__ import annotations

import numpy as np

_MASK64 = (1 << 64) - 1


def _splitmix64(state: int) -> tuple[int, int]:
    state = (state + 0x9E3779B97F4A7C15) & _MASK64
    z = state
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return state, z ^ (z >> 31)


def _rotl(x: int, k: int) -> int:
    return ((x << k) | (x >> (64 - k))) & _MASK64


class SeededRng:
    """xoshiro256++ stream over a 256-bit state derived from one 64-bit seed."""

    __slots__ = ("_s0", "_s1", "_s2", "_s3")

    def __init__(self, seed: int):
        sm = seed & _MASK64
        sm, self._s0 = _splitmix64(sm)
        sm, self._s1 = _splitmix64(sm)
        sm, self._s2 = _splitmix64(sm)
        sm, self._s3 = _splitmix64(sm)

    def next_u64(self) -> int:
        s0, s1, s2, s3 = self._s0, self._s1, self._s2, self._s3
        result = (_rotl((s0 + s3) & _MASK64, 23) + s0) & _MASK64
        t = (s1 << 17) & _MASK64
        s2 ^= s0
        s3 ^= s1
        s1 ^= s2
        s0 ^= s3
        s2 ^= t
        s3 = _rotl(s3, 45)
        self._s0, self._s1, self._s2, self._s3 = s0, s1, s2, s3
        return result

    def uniform(self, low: float = 0.0, high: float = 1.0) -> float:
        """Uniform double in [low, high) with 53 bits of precision."""
        u = (self.next_u64() >> 11) * (2.0 ** -53)
        return low + (high - low) * u

    def uniform_array(self, n: int, low: float = 0.0, high: float = 1.0) -> np.ndarray:
        """n uniform doubles; same stream as repeated uniform() calls."""
        s0, s1, s2, s3 = self._s0, self._s1, self._s2, self._s3
        mask = _MASK64
        scale = (high - low) * (2.0 ** -53)
        out = np.empty(n, dtype=np.float64)
        for i in range(n):
            result = ((((s0 + s3) & mask) << 23 | ((s0 + s3) & mask) >> 41) + s0) & mask
            t = (s1 << 17) & mask
            s2 ^= s0
            s3 ^= s1
            s1 ^= s2
            s0 ^= s3
            s2 ^= t
            s3 = ((s3 << 45) | (s3 >> 19)) & mask
            out[i] = low + (result >> 11) * scale
        self._s0, self._s1, self._s2, self._s3 = s0, s1, s2, s3
        return out

    def uniform_matrix(self, rows: int, cols: int, low: float, high: float) -> np.ndarray:
        return self.uniform_array(rows * cols, low, high).reshape(rows, cols)

    def below(self, n: int) -> int:
        """Unbiased integer in [0, n) via rejection sampling."""
        if n <= 0:
            raise ValueError("below() requires n >= 1")
        limit = _MASK64 + 1 - ((_MASK64 + 1) % n)
        while True:
            x = self.next_u64()
            if x < limit:
                return x % n

    def shuffle(self, items: list) -> None:
        """In-place Fisher-Yates."""
        for i in range(len(items) - 1, 0, -1):
            j = self.below(i + 1)
            items[i], items[j] = items[j], items[i]

    def choice(self, items):
        if not items:
            raise ValueError("choice() on empty sequence")
        return items[self.below(len(items))]

    def weighted_choice(self, items, weights):
        """Pick items[i] with probability weights[i] / sum(weights)."""
        if len(items) != len(weights) or not items:
            raise ValueError("items and weights must be equal-length and nonempty")
        total = float(sum(weights))
        if total <= 0.0:
            raise ValueError("weights must have a positive sum")
        x = self.uniform(0.0, total)
        acc = 0.0
        for item, w in zip(items, weights):
            acc += float(w)
            if x < acc:
                return item
        return items[-1]

    def derive(self) -> "SeededRng":
        """Independent child generator seeded from this stream."""
        return SeededRng(self.next_u64())
