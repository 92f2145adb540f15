"""xoshiro256** pseudo-random generator.

Reference algorithm by Blackman and Vigna (https://prng.di.unimi.it/).
The 256-bit state is seeded from a single 64-bit integer by four
successive splitmix64 outputs. Doubles use the top 53 bits of each
output: ``(x >> 11) * 2**-53``, so every value lies in [0, 1).

Everything sampled in this package (datasets, random initializations) goes
through this generator so results are reproducible from the algorithm
description alone.
"""

import math

import numpy as np

_MASK = (1 << 64) - 1


def _rotl(x, k):
    return ((x << k) | (x >> (64 - k))) & _MASK


def splitmix64(x):
    """Return (next_state, output)."""
    x = (x + 0x9E3779B97F4A7C15) & _MASK
    z = x
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK
    return x, z ^ (z >> 31)


class Xoshiro256:
    def __init__(self, seed: int = 0):
        x = int(seed) & _MASK
        s = []
        for _ in range(4):
            x, out = splitmix64(x)
            s.append(out)
        self.s = s

    def next_u64(self) -> int:
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

    def random(self) -> float:
        return (self.next_u64() >> 11) * (1.0 / (1 << 53))

    def random_array(self, size: int) -> np.ndarray:
        return np.array([self.random() for _ in range(size)], dtype=float)

    def dirichlet_ones(self, k: int) -> np.ndarray:
        """Symmetric Dirichlet(1) draw: normalized unit exponentials."""
        # 1 - u lies in (0, 1], so the log is finite
        e = np.array([-math.log(1.0 - self.random()) for _ in range(k)])
        return e / e.sum()
