"""Seedable, splittable 64-bit random streams.

xoshiro256** states seeded through a splitmix64 chain: replication r of an
experiment uses ``stream_state(base_seed + r)``, which gives independent,
reproducible streams.  The pure-Python RandomStream here and the jitted
generator in the simulation kernel implement the identical algorithm, bit
for bit; a test pins that equivalence.
"""

from __future__ import annotations

import math

import numpy as np

_MASK = (1 << 64) - 1


def _splitmix64(state: int) -> tuple[int, int]:
    state = (state + 0x9E3779B97F4A7C15) & _MASK
    z = state
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK
    return state, z ^ (z >> 31)


def stream_state(seed: int) -> np.ndarray:
    """Four xoshiro256** state words derived from an integer seed."""
    s = int(seed) & _MASK
    words = []
    for _ in range(4):
        s, w = _splitmix64(s)
        words.append(w)
    if not any(words):  # the all-zero state is a fixed point of xoshiro
        words[0] = 1
    return np.array(words, dtype=np.uint64)


def _rotl(x: int, k: int) -> int:
    return ((x << k) | (x >> (64 - k))) & _MASK


class RandomStream:
    """Pure-Python xoshiro256** stream (reference mirror of the sim kernel)."""

    __slots__ = ("s",)

    def __init__(self, seed: int):
        self.s = [int(w) for w in stream_state(seed)]

    def u64(self) -> int:
        s0, s1, s2, s3 = self.s
        result = (_rotl((s1 * 5) & _MASK, 7) * 9) & _MASK
        t = (s1 << 17) & _MASK
        s2 ^= s0
        s3 ^= s1
        s1 ^= s2
        s0 ^= s3
        s2 ^= t
        s3 = _rotl(s3, 45)
        self.s = [s0, s1, s2, s3]
        return result

    def uniform(self) -> float:
        """Uniform double in [0, 1) with 53 random bits."""
        return (self.u64() >> 11) * 2.0 ** -53

    def exponential(self, rate: float) -> float:
        return -math.log1p(-self.uniform()) / rate
