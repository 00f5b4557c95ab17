"""Deterministic seed derivation.

Every random stream in the package is addressed by a base seed plus a tuple of
non-negative integer keys. ``numpy.random.SeedSequence`` hashes the pair, so
distinct key tuples give statistically independent streams and the mapping does
not depend on the order in which tasks are executed.
"""
from __future__ import annotations

import numpy as np

# stream tags
NETWORK = 0
INITIAL = 1
BASELINE = 2
CALIBRATION = 3
MOMENTS = 4

_U64 = (1 << 64) - 1


def derive_seed(base_seed: int, *keys: int) -> int:
    """Return a 64-bit seed derived from ``base_seed`` and ``keys``."""
    if base_seed < 0 or any(k < 0 for k in keys):
        raise ValueError("seeds and keys must be non-negative")
    ss = np.random.SeedSequence(entropy=int(base_seed) & _U64, spawn_key=tuple(int(k) for k in keys))
    return int(ss.generate_state(1, dtype=np.uint64)[0])


def rng_from(seed: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(int(seed) & _U64))
