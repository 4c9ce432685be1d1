"""Seed splitting.

A run is driven by one 64-bit integer seed. Independent streams are derived
from it with ``numpy.random.SeedSequence(seed, spawn_key=keys)``, where
``keys`` is a tuple of non-negative integers naming the stream (for example
``(STREAM_ENSEMBLE, replicate_index)``). The same ``(seed, keys)`` always
yields the same stream, and distinct keys yield statistically independent
streams.
"""

import numpy as np

# Top-level stream identifiers. Values are part of the reproducibility
# contract: changing them changes every derived number.
STREAM_DATA = 0
STREAM_TRAIN = 1
STREAM_INIT = 2
STREAM_CALIBRATION = 3
STREAM_ENSEMBLE = 4
STREAM_DIAGNOSTIC = 5
STREAM_OPTIMIZER = 6
STREAM_HOLDOUT = 7


def _as_key(k):
    k = int(k)
    if k < 0:
        raise ValueError("stream keys must be non-negative")
    return k


def seed_sequence(seed, *keys):
    return np.random.SeedSequence(int(seed) & (2**64 - 1),
                                  spawn_key=tuple(_as_key(k) for k in keys))


def substream(seed, *keys):
    """Return a ``numpy.random.Generator`` for the stream ``keys`` of ``seed``."""
    return np.random.Generator(np.random.PCG64(seed_sequence(seed, *keys)))


def subseed(seed, *keys):
    """Return a derived 63-bit integer seed (for handing to other components)."""
    return int(seed_sequence(seed, *keys).generate_state(1, np.uint64)[0] >> np.uint64(1))


def as_generator(rng_or_seed):
    if isinstance(rng_or_seed, np.random.Generator):
        return rng_or_seed
    return substream(rng_or_seed)
