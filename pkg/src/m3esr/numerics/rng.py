"""Deterministic 64-bit random number generator (splitmix64).

The generator is counter based: output i of a stream seeded with s is
mix64(s + (i + 1) * GOLDEN) with all arithmetic modulo 2**64.  That makes
bulk generation a vectorized map over a counter range, and guarantees that
scalar draws and bulk fills produce the same sequence.  Identical seeds give
bit-identical sequences on every run and platform; nothing in the package
draws randomness from any other source.

Derived streams (per sample, per split, per purpose) come from `derive`,
which folds integer tags into a seed through the same mixing function.
"""

from __future__ import annotations

import math

import numpy as np

_MASK = (1 << 64) - 1
#: Public 64-bit mask for callers composing seeds by hand (xor folding etc).
MASK64 = _MASK
_GOLDEN = 0x9E3779B97F4A7C15
_MIX1 = 0xBF58476D1CE4E5B9
_MIX2 = 0x94D049BB133111EB

_U_GOLDEN = np.uint64(_GOLDEN)
_U_MIX1 = np.uint64(_MIX1)
_U_MIX2 = np.uint64(_MIX2)
_SHIFT30 = np.uint64(30)
_SHIFT27 = np.uint64(27)
_SHIFT31 = np.uint64(31)
_SHIFT11 = np.uint64(11)

# 2**-53, the spacing of the uniform grid on [0, 1).
_INV53 = 1.0 / (1 << 53)


def mix64(z: int) -> int:
    """The splitmix64 finalizer on a single 64-bit integer."""
    z &= _MASK
    z ^= z >> 30
    z = (z * _MIX1) & _MASK
    z ^= z >> 27
    z = (z * _MIX2) & _MASK
    z ^= z >> 31
    return z


def derive(seed: int, *tags: int) -> int:
    """Fold integer tags into a seed, one mixing round per tag.

    Used to build disjoint child streams: per-split masters, per-sample
    seeds, per-purpose substreams.  derive(s) with no tags returns s mod 2**64.
    """
    s = seed & _MASK
    for t in tags:
        s = mix64((s ^ (t & _MASK)) + _GOLDEN)
    return s


def _mix_array(z: np.ndarray) -> np.ndarray:
    z = z ^ (z >> _SHIFT30)
    z = z * _U_MIX1
    z = z ^ (z >> _SHIFT27)
    z = z * _U_MIX2
    z = z ^ (z >> _SHIFT31)
    return z


class Rng:
    """Stateful splitmix64 stream.

    The state is the counter; every draw advances it by GOLDEN.  fill_u64(n)
    advances it exactly n times and equals n successive u64() calls.
    """

    __slots__ = ("_state",)

    def __init__(self, seed: int):
        self._state = seed & _MASK

    @property
    def state(self) -> int:
        return self._state

    def u64(self) -> int:
        self._state = (self._state + _GOLDEN) & _MASK
        return mix64(self._state)

    def fill_u64(self, n: int) -> np.ndarray:
        if n < 0:
            raise ValueError(f"draw count must be nonnegative, got {n}")
        steps = np.arange(1, n + 1, dtype=np.uint64) * _U_GOLDEN
        out = _mix_array(np.uint64(self._state) + steps)
        self._state = (self._state + n * _GOLDEN) & _MASK
        return out

    def uniform(self, shape=None) -> "np.ndarray | float":
        """Uniform draws on [0, 1) with 53-bit resolution."""
        if shape is None:
            return (self.u64() >> 11) * _INV53
        n = int(np.prod(shape)) if shape != () else 1
        bits = self.fill_u64(n) >> _SHIFT11
        return (bits.astype(np.float64) * _INV53).reshape(shape)

    def normal(self, shape=None) -> "np.ndarray | float":
        """Standard normal draws via the Box-Muller cosine branch.

        Each output consumes two u64 draws, so the stream advance is a fixed
        function of the requested count.
        """
        if shape is None:
            return float(self.normal((1,))[0])
        n = int(np.prod(shape)) if shape != () else 1
        bits = self.fill_u64(2 * n)
        # u1 on (0, 1] so the log is finite.
        u1 = ((bits[:n] >> _SHIFT11).astype(np.float64) + 1.0) * _INV53
        u2 = (bits[n:] >> _SHIFT11).astype(np.float64) * _INV53
        r = np.sqrt(-2.0 * np.log(u1))
        return (r * np.cos(2.0 * math.pi * u2)).reshape(shape)

    def randint(self, n: int) -> int:
        """Uniform integer in [0, n).  Modulo bias is below n / 2**64."""
        if n <= 0:
            raise ValueError(f"randint bound must be positive, got {n}")
        return self.u64() % n

    def permutation(self, n: int) -> np.ndarray:
        """Fisher-Yates permutation of range(n)."""
        perm = np.arange(n)
        for i in range(n - 1, 0, -1):
            j = self.randint(i + 1)
            perm[i], perm[j] = perm[j], perm[i]
        return perm
