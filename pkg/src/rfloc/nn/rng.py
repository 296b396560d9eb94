"""Counter-based random streams.

Every consumer of randomness derives an independent Philox stream from one
run seed plus a tag tuple (for example ``("probe", epoch, sample_index)``).
Draws therefore do not depend on how many other streams were consumed or in
which order, which is what makes training and probing schedule-independent
and bit-reproducible across platforms.
"""

from __future__ import annotations

import hashlib

import numpy as np

_MASK64 = (1 << 64) - 1


def _splitmix64(x: int) -> int:
    x = (x + 0x9E3779B97F4A7C15) & _MASK64
    z = x
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return z ^ (z >> 31)


def _tag_word(tag) -> int:
    if isinstance(tag, str):
        # Stable across processes, unlike the builtin hash().
        return int.from_bytes(
            hashlib.blake2b(tag.encode("utf-8"), digest_size=8).digest(), "little"
        )
    if isinstance(tag, (int, np.integer)):
        return int(tag) & _MASK64
    raise TypeError(f"stream tags must be str or int, got {type(tag).__name__}")


class Rng:
    """Deterministic factory of independent random streams for one seed."""

    def __init__(self, seed: int):
        self.seed = int(seed) & _MASK64

    def stream(self, *tags) -> np.random.Generator:
        """Return a fresh generator keyed by (seed, tags).

        The same (seed, tags) always yields the same draw sequence.
        """
        k = _splitmix64(self.seed)
        for tag in tags:
            k = _splitmix64(k ^ _tag_word(tag))
        key = (k << 64) | _splitmix64(k ^ 0xA5A5A5A5A5A5A5A5)
        return np.random.Generator(np.random.Philox(key=key))
