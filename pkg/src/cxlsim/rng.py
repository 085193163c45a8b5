"""Seedable 64-bit PRNG and Zipf sampling.

The generator is splitmix64 (Steele, Lea & Flood's SplittableRandom finalizer),
chosen because it is trivially reproducible from a documented algorithm: two
runs with the same seed produce the same stream on any implementation, which
the determinism contract of the simulator depends on. Zipf sampling uses plain
rank-probability inversion over a precomputed cumulative table.
"""

from __future__ import annotations

import bisect

MASK64 = (1 << 64) - 1


class Rng:
    """splitmix64 stream."""

    def __init__(self, seed: int):
        self._state = seed & MASK64

    def next_u64(self) -> int:
        self._state = (self._state + 0x9E3779B97F4A7C15) & MASK64
        z = self._state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
        return z ^ (z >> 31)

    def random(self) -> float:
        """Uniform float in [0, 1) with 53 bits of precision."""
        return (self.next_u64() >> 11) * (1.0 / (1 << 53))

    def randint(self, lo: int, hi: int) -> int:
        """Uniform integer in [lo, hi] inclusive."""
        span = hi - lo + 1
        return lo + self.next_u64() % span

    def shuffle(self, items: list) -> None:
        """In-place Fisher-Yates."""
        for i in range(len(items) - 1, 0, -1):
            j = self.next_u64() % (i + 1)
            items[i], items[j] = items[j], items[i]

    def split(self, tag: int) -> "Rng":
        """Derive an independent sub-stream; used to key parallel campaigns."""
        return Rng(self.next_u64() ^ (tag * 0x9E3779B97F4A7C15) & MASK64)


def derive_seed(seed: int, tag: int) -> int:
    """Stable sub-seed for a named stream (workload, crash points, ...)."""
    return Rng((seed ^ (tag * 0xD1B54A32D192ED03)) & MASK64).next_u64()


class ZipfSampler:
    """Zipf(s) over ranks 0..n-1 by inverse-CDF lookup.

    s = 0 degenerates to the uniform distribution. The normalization constant
    is precomputed once; each draw is a binary search in the cumulative table.
    """

    def __init__(self, n: int, s: float):
        if n <= 0:
            raise ValueError("need at least one rank")
        if s < 0:
            raise ValueError("skew must be >= 0")
        self.n = n
        self.s = s
        cum = []
        total = 0.0
        for rank in range(1, n + 1):
            total += rank ** -s
            cum.append(total)
        self._cum = cum
        self._total = total

    def probability(self, rank: int) -> float:
        """P(rank), rank 0-based."""
        return ((rank + 1) ** -self.s) / self._total

    def sample(self, rng: Rng) -> int:
        u = rng.random() * self._total
        return bisect.bisect_left(self._cum, u)
