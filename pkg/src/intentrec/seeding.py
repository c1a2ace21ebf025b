"""Deterministic RNG derivation.

Every random draw in the package flows through a numpy Generator obtained
from an explicit integer key sequence, so any run is reproducible from its
master seed alone.  Streams for different purposes are separated by a small
integer code, e.g. ``derive_rng(seed, STREAM_SHUFFLE, epoch)``.
"""

from __future__ import annotations

import numpy as np

# Stream codes.  Appending new codes is fine; renumbering breaks replays.
STREAM_INIT = 0
STREAM_SHUFFLE = 1
STREAM_AUGMENT = 2
STREAM_NEGATIVES = 3
STREAM_DROPOUT = 4
STREAM_CLUSTER = 5
STREAM_NOISE = 6


def derive_rng(*keys: int) -> np.random.Generator:
    """PCG64 generator keyed by a tuple of non-negative integers."""
    if any(k < 0 for k in keys):
        raise ValueError(f"rng keys must be non-negative, got {keys}")
    return np.random.default_rng(list(keys))


def as_rng(seed: int | np.random.Generator) -> np.random.Generator:
    """Accept either an integer seed or an existing Generator."""
    if isinstance(seed, np.random.Generator):
        return seed
    return derive_rng(int(seed))
