"""Replayable random streams.

Every stochastic routine takes an explicit ``numpy.random.Generator``.  Streams
for replications are derived from ``(seed, cell id, replication, attempt)``
through :class:`numpy.random.SeedSequence` spawn keys, so the value of a
replication never depends on which worker computed it or in what order.
"""

from __future__ import annotations

import zlib

import numpy as np

__all__ = ["cell_key", "make_rng", "replication_rng", "as_rng"]


def cell_key(label: str) -> int:
    """Stable 32-bit integer for a textual cell label."""
    return zlib.crc32(label.encode("utf-8"))


def make_rng(seed: int, *key: int) -> np.random.Generator:
    seq = np.random.SeedSequence(int(seed), spawn_key=tuple(int(k) for k in key))
    return np.random.Generator(np.random.PCG64(seq))


def replication_rng(seed: int, cell: str, rep: int, attempt: int = 0) -> np.random.Generator:
    return make_rng(seed, cell_key(cell), rep, attempt)


def as_rng(rng=None) -> np.random.Generator:
    """Accept a Generator, an integer seed or None."""
    if isinstance(rng, np.random.Generator):
        return rng
    return np.random.default_rng(rng)
