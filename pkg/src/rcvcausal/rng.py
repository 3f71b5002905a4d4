"""Counter-based random streams.

Every stochastic component draws from a Philox (4x64) generator keyed by a
user seed plus a tuple of stream indices, so any (seed, purpose) pair maps
to an independent, reproducible stream. Stream index conventions:

* ``(dataset_index, STREAM_STRUCTURE)`` - coefficient structure draws
* ``(dataset_index, STREAM_NOISE)``     - innovation noise
* ``(dataset_index, STREAM_TREND)``     - trend slopes
* ``(dataset_index, STREAM_WALK)``      - random-walk fluctuations
* ``(STREAM_BOOTSTRAP, resample_index)``- bootstrap block starts
"""

from __future__ import annotations

import numpy as np

_MASK64 = (1 << 64) - 1
_MIX = 0x9E3779B97F4A7C15

STREAM_STRUCTURE = 0
STREAM_NOISE = 1
STREAM_TREND = 2
STREAM_WALK = 3
STREAM_BOOTSTRAP = 4


def _fold(indices: tuple[int, ...]) -> int:
    h = 0
    for ix in indices:
        h = (h * _MIX + (int(ix) & _MASK64) + 1) & _MASK64
    return h


def rng_stream(seed: int, *stream: int) -> np.random.Generator:
    """Independent generator for (seed, stream indices)."""
    key = np.array([int(seed) & _MASK64, _fold(stream)], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


def derive_seed(seed: int, *stream: int) -> int:
    """Deterministic 63-bit child seed for (seed, stream indices)."""
    return int(rng_stream(seed, *stream).integers(0, 1 << 63))
