"""Deterministic counter-based random numbers.

Every stochastic choice in this package flows through :class:`Rng`, a
SplitMix64 generator used in counter mode: draw ``i`` of a stream seeded
with ``s`` is ``mix64((s + (i + 1) * GOLDEN) mod 2**64)`` where ``GOLDEN``
is 0x9E3779B97F4A7C15 and ``mix64`` is the standard SplitMix64 finalizer

    z ^= z >> 30;  z *= 0xBF58476D1CE4E5B9
    z ^= z >> 27;  z *= 0x94D049BB133111EB
    z ^= z >> 31

(all arithmetic mod 2**64).  Because each draw is a pure function of
(seed, counter), bulk draws vectorize exactly and any other language can
reproduce the streams from this comment alone.

Uniform doubles take the top 53 bits: ``u = (x >> 11) * 2.0**-53`` in
[0, 1).  Bounded integers use rejection sampling below the largest multiple
of ``n`` to stay unbiased.  Shuffles are backward Fisher-Yates.

Hierarchical seeds come from :func:`derive_seed`, which folds integer and
string tokens (strings via 64-bit FNV-1a) into the parent seed one mix64
application per token.
"""

from __future__ import annotations

import numpy as np

MASK64 = (1 << 64) - 1
GOLDEN = 0x9E3779B97F4A7C15

_M1 = 0xBF58476D1CE4E5B9
_M2 = 0x94D049BB133111EB


def mix64(z: int) -> int:
    """SplitMix64 finalizer on a 64-bit integer."""
    z &= MASK64
    z = ((z ^ (z >> 30)) * _M1) & MASK64
    z = ((z ^ (z >> 27)) * _M2) & MASK64
    return z ^ (z >> 31)


def fnv1a64(text: str) -> int:
    """64-bit FNV-1a hash of the UTF-8 encoding of ``text``."""
    h = 0xCBF29CE484222325
    for byte in text.encode("utf-8"):
        h = ((h ^ byte) * 0x100000001B3) & MASK64
    return h


def derive_seed(seed: int, *tokens: int | str) -> int:
    """Derive a child seed from a parent seed and a token path.

    Token order matters; integer and string tokens hash differently, so
    ("a", 1) and (1, "a") give unrelated streams.
    """
    state = mix64(seed)
    for tok in tokens:
        h = fnv1a64(tok) if isinstance(tok, str) else (int(tok) & MASK64)
        state = mix64(state ^ mix64((h + GOLDEN) & MASK64))
    return state


class Rng:
    """Counter-mode SplitMix64 stream."""

    __slots__ = ("seed", "counter")

    def __init__(self, seed: int):
        self.seed = int(seed) & MASK64
        self.counter = 0

    def next_u64(self) -> int:
        self.counter += 1
        return mix64((self.seed + self.counter * GOLDEN) & MASK64)

    def uniform(self, lo: float = 0.0, hi: float = 1.0) -> float:
        u = (self.next_u64() >> 11) * 2.0**-53
        return lo + (hi - lo) * u

    def randint(self, n: int) -> int:
        """Unbiased integer in [0, n)."""
        if n <= 0:
            raise ValueError("randint needs n >= 1")
        limit = (2**64 // n) * n
        while True:
            x = self.next_u64()
            if x < limit:
                return x % n

    def choice(self, seq):
        return seq[self.randint(len(seq))]

    def shuffle(self, seq: list) -> None:
        """In-place backward Fisher-Yates shuffle."""
        for i in range(len(seq) - 1, 0, -1):
            j = self.randint(i + 1)
            seq[i], seq[j] = seq[j], seq[i]

    def _raw_block(self, count: int) -> np.ndarray:
        # Vectorized draws: identical to `count` sequential next_u64 calls.
        start = self.counter + 1
        self.counter += count
        ctr = np.arange(start, start + count, dtype=np.uint64)
        z = (np.uint64(self.seed) + ctr * np.uint64(GOLDEN)).astype(np.uint64)
        z = (z ^ (z >> np.uint64(30))) * np.uint64(_M1)
        z = (z ^ (z >> np.uint64(27))) * np.uint64(_M2)
        return z ^ (z >> np.uint64(31))

    def uniform_array(self, shape, lo: float = 0.0, hi: float = 1.0) -> np.ndarray:
        shape = tuple(int(s) for s in np.atleast_1d(shape)) if not np.isscalar(shape) else (int(shape),)
        count = int(np.prod(shape)) if shape else 1
        bits = self._raw_block(count) >> np.uint64(11)
        u = bits.astype(np.float64) * 2.0**-53
        return (lo + (hi - lo) * u).reshape(shape)
