"""Counter-based deterministic random streams.

Every draw is a pure function of (seed, stream tags, counter words), so the
value of a draw never depends on call order, shard count, or how many draws
other environments consumed. This is what makes sharded rollouts and
rejection-sampling resets bitwise reproducible.
"""

from __future__ import annotations

import math

import numpy as np

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_MIX1 = np.uint64(0xBF58476D1CE4E5B9)
_MIX2 = np.uint64(0x94D049BB133111EB)
_U64_TO_UNIT = float(2.0**-53)
TWO_PI = 2.0 * math.pi


def _mix(x: np.ndarray) -> np.ndarray:
    """splitmix64 finalizer over uint64 arrays (wrapping arithmetic)."""
    x = (x ^ (x >> np.uint64(30))) * _MIX1
    x = (x ^ (x >> np.uint64(27))) * _MIX2
    return x ^ (x >> np.uint64(31))


def _absorb(state: np.ndarray, word) -> np.ndarray:
    w = np.asarray(word).astype(np.uint64, copy=False)
    return _mix(state ^ ((w + np.uint64(1)) * _GOLDEN))


class Stream:
    """A keyed family of uniforms indexed by integer counters.

    ``Stream(seed, *tags)`` fixes the key; ``uniform(*counters)`` hashes the
    counter words into a float64 in [0, 1). Counter arguments broadcast like
    numpy arrays.
    """

    __slots__ = ("_base", "seed", "tags")

    def __init__(self, seed: int, *tags: int):
        self.seed = int(seed)
        self.tags = tuple(int(t) for t in tags)
        with np.errstate(over="ignore"):
            base = _absorb(_GOLDEN, np.uint64(self.seed & 0xFFFFFFFFFFFFFFFF))
            for t in self.tags:
                base = _absorb(base, np.uint64(t & 0xFFFFFFFFFFFFFFFF))
        self._base = base

    def child(self, *tags: int) -> "Stream":
        return Stream(self.seed, *(self.tags + tuple(tags)))

    def _hash(self, counters) -> np.ndarray:
        with np.errstate(over="ignore"):
            words = [np.asarray(c, dtype=np.uint64) for c in counters]
            state = np.broadcast_to(self._base, np.broadcast_shapes(*(w.shape for w in words)) if words else ())
            state = state.copy()
            for w in words:
                state = _absorb(state, w)
        return state

    def uniform(self, *counters) -> np.ndarray:
        """float64 in [0, 1), elementwise over broadcast counters."""
        h = self._hash(counters)
        return (h >> np.uint64(11)).astype(np.float64) * _U64_TO_UNIT

    def normal(self, *counters) -> np.ndarray:
        """Standard normal via Box-Muller on two derived uniforms."""
        u1 = self.uniform(*counters, 0)
        u2 = self.uniform(*counters, 1)
        r = np.sqrt(-2.0 * np.log1p(-u1))  # 1-u1 in (0,1] so the log is finite
        return r * np.cos(TWO_PI * u2)

    def randint(self, n: int, *counters) -> np.ndarray:
        """Integer in [0, n), elementwise."""
        u = self.uniform(*counters)
        return np.minimum((u * n).astype(np.int64), n - 1)

    def permutation(self, n: int, *counters) -> np.ndarray:
        """Deterministic permutation of range(n) keyed by the counters."""
        keys = self.uniform(*counters, np.arange(n, dtype=np.uint64))
        return np.argsort(keys, kind="stable")


class DrawCursor:
    """Sequential scalar draws from a stream, for variable-length consumers.

    Rejection-sampling resets draw an unpredictable number of uniforms; the
    cursor indexes them 0, 1, 2, ... under a fixed counter prefix so the
    sequence is reproducible no matter where the reset runs. Draws are
    prefetched in blocks; the values depend only on the counter index.
    """

    __slots__ = ("_stream", "_prefix", "_i", "_block", "_block_start")
    _BLOCK = 16

    def __init__(self, stream: Stream, *prefix: int):
        self._stream = stream
        self._prefix = tuple(int(p) for p in prefix)
        self._i = 0
        self._block = None
        self._block_start = 0

    def uniform(self) -> float:
        off = self._i - self._block_start
        if self._block is None or off >= self._BLOCK:
            self._block_start = self._i
            idx = np.arange(self._i, self._i + self._BLOCK, dtype=np.uint64)
            self._block = self._stream.uniform(*self._prefix, idx)
            off = 0
        self._i += 1
        return float(self._block[off])

    def uniform_symmetric(self) -> float:
        """Uniform in [-1, 1)."""
        return 2.0 * self.uniform() - 1.0

    def randint(self, n: int) -> int:
        return min(int(self.uniform() * n), n - 1)

    def permutation(self, n: int) -> np.ndarray:
        out = np.arange(n, dtype=np.int64)
        for k in range(n - 1, 0, -1):
            j = self.randint(k + 1)
            out[k], out[j] = out[j], out[k]
        return out
