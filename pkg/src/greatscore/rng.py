"""Seed handling.

Every random quantity in the package comes from a
:class:`numpy.random.Generator` backed by PCG64 and seeded through
:class:`numpy.random.SeedSequence`. Standard normals use numpy's ziggurat
sampler (``Generator.standard_normal``); this choice is fixed, so a given
seed always maps to the same stream on a given numpy major version.

Derived streams (repeats, trials, probe pairs) are keyed by appending
integers to the parent seed, e.g. ``stream(seed, 3, 17)``. Keys are
positional, so adding work items never perturbs existing streams.
"""
from __future__ import annotations

from typing import Sequence, Union

import numpy as np

SeedLike = Union[int, Sequence[int], np.random.SeedSequence]


def seed_sequence(seed: SeedLike, *keys: int) -> np.random.SeedSequence:
    if isinstance(seed, np.random.SeedSequence):
        if keys:
            entropy = seed.entropy
            base = list(entropy) if isinstance(entropy, (list, tuple)) else [entropy]
            return np.random.SeedSequence(base + list(seed.spawn_key) + list(keys))
        return seed
    if isinstance(seed, (int, np.integer)):
        base = [int(seed)]
    else:
        base = [int(s) for s in seed]
    if any(b < 0 for b in base) or any(k < 0 for k in keys):
        raise ValueError("seeds must be non-negative integers")
    return np.random.SeedSequence(base + [int(k) for k in keys])


def stream(seed: SeedLike, *keys: int) -> np.random.Generator:
    """Return the generator for ``seed`` extended by ``keys``."""
    return np.random.Generator(np.random.PCG64(seed_sequence(seed, *keys)))
