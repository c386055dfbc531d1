"""Counter-based random substreams.

Every stochastic quantity in a solve is drawn from a generator keyed by
(seed, purpose-tag, indices...), so results are reproducible regardless of
evaluation order or thread count.
"""

from __future__ import annotations

import zlib

import numpy as np

_MASK64 = (1 << 64) - 1


def substream(seed: int, tag: str, *indices: int) -> np.random.Generator:
    """Return a fresh generator for the given (seed, tag, indices) key."""
    key = (zlib.crc32(tag.encode("utf-8")),) + tuple(int(i) & _MASK64 for i in indices)
    ss = np.random.SeedSequence(entropy=int(seed) & _MASK64, spawn_key=key)
    return np.random.Generator(np.random.PCG64(ss))


def sample_exponential(rate: float, gen: np.random.Generator, size=None):
    """Exponential draws by inverse CDF, -ln(u)/rate with u in (0, 1]."""
    if rate <= 0:
        raise ValueError(f"rate must be positive, got {rate}")
    u = 1.0 - gen.random(size)  # gen.random() is in [0,1), so u is in (0,1]
    return -np.log(u) / rate
