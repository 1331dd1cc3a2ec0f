"""Seeded SplitMix64 generator shared by every random draw in the package.

The generator is counter based: the i-th output (i = 1, 2, ...) of a stream
seeded with ``s`` is ``mix(s + i * 0x9E3779B97F4A7C15 mod 2**64)`` where::

    mix(z):
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9
        z = (z ^ (z >> 27)) * 0x94D049BB133111EB
        return z ^ (z >> 31)

all arithmetic modulo 2**64. Derived quantities:

* uniform float in [0, 1): ``(u64 >> 11) * 2**-53``
* standard normal: Box-Muller on two consecutive uniforms ``u1, u2`` giving
  ``sqrt(-2 ln(1 - u1)) * cos(2 pi u2)``; one normal per pair
* permutation of ``range(n)``: Fisher-Yates from the top, swap index
  ``i`` with ``j = floor(u * (i + 1))`` for ``i = n-1 .. 1``
* sub-streams: ``derive_seed(seed, *keys)`` folds each key into the seed with
  ``h = mix(h ^ k)`` (strings are hashed with 64-bit FNV-1a first)

Because the stream is a pure function of (seed, counter) it can be evaluated
in vectorised blocks without changing any value.
"""
from __future__ import annotations

import numpy as np

MASK64 = (1 << 64) - 1
GAMMA = 0x9E3779B97F4A7C15
_M1 = 0xBF58476D1CE4E5B9
_M2 = 0x94D049BB133111EB
_FNV_OFFSET = 0xCBF29CE484222325
_FNV_PRIME = 0x100000001B3


def mix64(z: int) -> int:
    z &= MASK64
    z = ((z ^ (z >> 30)) * _M1) & MASK64
    z = ((z ^ (z >> 27)) * _M2) & MASK64
    return z ^ (z >> 31)


def _mix64_array(z: np.ndarray) -> np.ndarray:
    # uint64 array arithmetic wraps modulo 2**64
    z = (z ^ (z >> np.uint64(30))) * np.uint64(_M1)
    z = (z ^ (z >> np.uint64(27))) * np.uint64(_M2)
    return z ^ (z >> np.uint64(31))


def fnv1a64(text: str) -> int:
    h = _FNV_OFFSET
    for byte in text.encode("utf-8"):
        h = ((h ^ byte) * _FNV_PRIME) & MASK64
    return h


def derive_seed(seed: int, *keys: int | str) -> int:
    """Fold ``keys`` into ``seed`` to obtain an independent sub-stream seed."""
    h = mix64(seed & MASK64)
    for key in keys:
        k = fnv1a64(key) if isinstance(key, str) else int(key) & MASK64
        h = mix64(h ^ k)
    return h


class SplitMix64:
    """Stateful view over the counter-based stream."""

    def __init__(self, seed: int):
        self.seed = int(seed) & MASK64
        self.counter = 0

    def next_u64(self) -> int:
        self.counter += 1
        return mix64(self.seed + self.counter * GAMMA)

    def u64(self, n: int) -> np.ndarray:
        idx = np.arange(self.counter + 1, self.counter + 1 + n, dtype=np.uint64)
        self.counter += n
        with np.errstate(over="ignore"):
            states = np.uint64(self.seed) + idx * np.uint64(GAMMA)
            return _mix64_array(states)

    def uniform(self, n: int) -> np.ndarray:
        return (self.u64(n) >> np.uint64(11)).astype(np.float64) * 2.0**-53

    def normal(self, n: int) -> np.ndarray:
        u = self.uniform(2 * n)
        u1, u2 = u[0::2], u[1::2]
        return np.sqrt(-2.0 * np.log1p(-u1)) * np.cos(2.0 * np.pi * u2)

    def permutation(self, n: int) -> np.ndarray:
        perm = np.arange(n)
        if n < 2:
            return perm
        u = self.uniform(n - 1)
        for step, i in enumerate(range(n - 1, 0, -1)):
            j = int(u[step] * (i + 1))
            perm[i], perm[j] = perm[j], perm[i]
        return perm
