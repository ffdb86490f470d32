"""Seeded random streams.

Every stochastic step draws from a counter-based Philox generator keyed by
the run seed and a named stream, so scene layout, sparse sampling and
parameter initialisation stay reproducible independently of each other and
across platforms.
"""

from __future__ import annotations

import zlib

import numpy as np

STREAMS = ("scene", "sampling", "init", "gradcheck", "selection")


def stream_key(name: str) -> int:
    return zlib.crc32(name.encode("utf-8"))


def make_rng(seed: int, stream: str = "scene") -> np.random.Generator:
    """Philox generator for ``(seed, stream)``."""
    seed = int(seed)
    if seed < 0 or seed >= 2**64:
        raise ValueError(f"seed must be an unsigned 64-bit integer, got {seed}")
    sequence = np.random.SeedSequence(seed, spawn_key=(stream_key(stream),))
    return np.random.Generator(np.random.Philox(sequence))
