"""Deterministic, splittable random number generation.

The generator is a counter-based SplitMix64: draw ``k`` of a stream seeded
with ``s`` is ``mix64(s + (k+1) * GOLDEN)``, so a stream is a pure function
of (seed, counter) and identical seeds give identical sequences on every
platform. Normal variates come from Box-Muller on the uniform stream.
"""

from __future__ import annotations

import numpy as np

_MASK64 = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15


def _mix64_int(x: int) -> int:
    """SplitMix64 finalizer on a plain Python int (mod 2^64)."""
    x &= _MASK64
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9 & _MASK64
    x = (x ^ (x >> 27)) * 0x94D049BB133111EB & _MASK64
    return x ^ (x >> 31)


def _mix64(x: np.ndarray) -> np.ndarray:
    """Vectorized SplitMix64 finalizer over a uint64 array."""
    x = (x ^ (x >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
    x = (x ^ (x >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
    return x ^ (x >> np.uint64(31))


class Rng:
    """Deterministic random stream with splittable sub-streams.

    >>> a, b = Rng(7), Rng(7)
    >>> bool(np.array_equal(a.normal((3, 3)), b.normal((3, 3))))
    True
    """

    def __init__(self, seed: int, _counter: int = 0):
        self.seed = int(seed) & _MASK64
        self._counter = _counter

    def spawn(self, key: int) -> "Rng":
        """Derive an independent child stream; pure in (seed, key)."""
        return Rng(_mix64_int(self.seed ^ _mix64_int((int(key) + 1) * _GOLDEN)))

    def _next_u64(self, n: int) -> np.ndarray:
        ks = np.arange(self._counter + 1, self._counter + n + 1, dtype=np.uint64)
        self._counter += n
        with np.errstate(over="ignore"):
            return _mix64(np.uint64(self.seed) + ks * np.uint64(_GOLDEN))

    def uniform(self, shape=()) -> np.ndarray:
        """Uniform draws in [0, 1) as float64."""
        n = int(np.prod(shape, dtype=np.int64)) if shape else 1
        u = (self._next_u64(n) >> np.uint64(11)) * 2.0**-53
        return u.reshape(shape) if shape else u[0]

    def normal(self, shape=(), dtype=np.float32) -> np.ndarray:
        """I.i.d. standard normal draws via Box-Muller."""
        n = int(np.prod(shape, dtype=np.int64)) if shape else 1
        m = (n + 1) // 2
        # u1 in (0, 1] so the log is finite
        u1 = ((self._next_u64(m) >> np.uint64(11)) + np.uint64(1)) * 2.0**-53
        u2 = (self._next_u64(m) >> np.uint64(11)) * 2.0**-53
        r = np.sqrt(-2.0 * np.log(u1))
        theta = 2.0 * np.pi * u2
        z = np.concatenate([r * np.cos(theta), r * np.sin(theta)])[:n]
        out = z.astype(dtype)
        return out.reshape(shape) if shape else out[0]

    def integers(self, low: int, high: int, size: int) -> np.ndarray:
        """Uniform integers in [low, high); slight modulo bias is irrelevant
        for the ranges used here (high - low << 2^64)."""
        if high <= low:
            raise ValueError(f"empty integer range [{low}, {high})")
        span = np.uint64(high - low)
        return (self._next_u64(size) % span).astype(np.int64) + low

    def permutation(self, n: int) -> np.ndarray:
        """Fisher-Yates shuffle of arange(n), driven by this stream."""
        perm = np.arange(n)
        for i in range(n - 1, 0, -1):
            j = int(self._next_u64(1)[0] % np.uint64(i + 1))
            perm[i], perm[j] = perm[j], perm[i]
        return perm

    def choice(self, n: int, k: int) -> np.ndarray:
        """k distinct indices drawn uniformly from range(n)."""
        if k > n:
            raise ValueError(f"cannot draw {k} distinct values from {n}")
        return self.permutation(n)[:k]
