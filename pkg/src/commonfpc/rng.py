"""Deterministic random streams.

Every consumer of randomness asks for a stream keyed by the master seed and
a tuple of non-negative integer indices (trial, replicate, group, ...).
Streams are Philox counter-based generators seeded through
:class:`numpy.random.SeedSequence` with the indices as spawn key, so any
stream can be recreated independently of the order in which others were
drawn. That is what makes parallel schedules reproduce sequential results.
"""

from __future__ import annotations

import numpy as np

from .exceptions import ValidationError


def stream(seed: int, *keys: int) -> np.random.Generator:
    """Generator for ``(seed, *keys)``; same arguments give the same stream."""
    if int(seed) < 0 or any(int(k) < 0 for k in keys):
        raise ValidationError("seeds and stream keys must be non-negative integers")
    ss = np.random.SeedSequence(int(seed), spawn_key=tuple(int(k) for k in keys))
    return np.random.Generator(np.random.Philox(ss))


def derive_seed(seed: int, *keys: int) -> int:
    """A 63-bit integer seed derived from ``(seed, *keys)``."""
    ss = np.random.SeedSequence(int(seed), spawn_key=tuple(int(k) for k in keys))
    return int(ss.generate_state(1, dtype=np.uint64)[0] >> np.uint64(1))
