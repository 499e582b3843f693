"""Reproducible random streams.

All samplers draw from counter-based Philox streams keyed by an integer
seed plus a tuple of labels (chain id, stream id, vertex index, ...).
Distinct keys give statistically independent streams, so per-column or
per-response work can run in any order, or in parallel, without changing
the numbers drawn.
"""

from __future__ import annotations

import zlib

import numpy as np


def _encode(part) -> int:
    if isinstance(part, str):
        return zlib.crc32(part.encode("utf-8"))
    return int(part) & 0xFFFFFFFF


def stream(seed: int, *key) -> np.random.Generator:
    """Return the generator for (seed, *key); same key, same sequence."""
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(_encode(k) for k in key))
    return np.random.Generator(np.random.Philox(ss))
