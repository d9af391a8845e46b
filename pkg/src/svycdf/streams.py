"""Deterministic splittable random streams.

Every stream is addressed by a root seed plus an integer path, realized
through ``numpy.random.SeedSequence`` spawn keys.  Workers reconstruct
their own generators from the address alone, so results never depend on
scheduling order or worker count.
"""

from __future__ import annotations

import numpy as np


def substream(seed: int, *path: int) -> np.random.Generator:
    """Generator for the stream addressed by ``(seed, *path)``."""
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=tuple(path)))


def child_seed(seed: int, *path: int) -> int:
    """Stable 64-bit integer seed derived from ``(seed, *path)``."""
    ss = np.random.SeedSequence(seed, spawn_key=tuple(path))
    return int(ss.generate_state(1, dtype=np.uint64)[0])
