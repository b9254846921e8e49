"""Seed-stable random stream derivation.

Every random component (client data, participant selection, coordinate
masks, attack noise, trials) owns an independent stream addressed by an
integer path below a single root seed.  Streams are derived with
``numpy.random.SeedSequence`` spawn keys, so the stream for entity ``k``
depends only on the root seed and ``k`` -- adding more entities never
perturbs existing ones.
"""
from __future__ import annotations

import numpy as np

SeedLike = "int | np.random.SeedSequence | None"


def seed_sequence(seed=None) -> np.random.SeedSequence:
    """Coerce an integer seed (or None for fresh entropy) to a SeedSequence."""
    if isinstance(seed, np.random.SeedSequence):
        return seed
    return np.random.SeedSequence(seed)


def substream(root: np.random.SeedSequence, *key: int) -> np.random.SeedSequence:
    """Child SeedSequence at ``key``, appended to the root's spawn path.

    ``substream(root, a, b)`` is a pure function of ``(root.entropy,
    root.spawn_key, a, b)``; siblings with different keys are independent.
    """
    return np.random.SeedSequence(root.entropy, spawn_key=tuple(root.spawn_key) + key)


def generator(seed=None) -> np.random.Generator:
    """PCG64 generator from a seed, SeedSequence, or existing Generator."""
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed_sequence(seed))
