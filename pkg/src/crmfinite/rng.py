"""Seeded, splittable random number streams.

Every sampler in this package takes an explicit ``numpy.random.Generator``.
Streams are derived from a 64-bit master seed with the counter-based Philox
bit generator, so replicate r of a run always sees the same stream regardless
of scheduling:

    seed_r = SeedSequence(entropy=master, spawn_key=(r,))
"""

import numpy as np

__all__ = ["derive_rng", "derive_seedseq"]


def derive_seedseq(master: int, *path: int) -> np.random.SeedSequence:
    """Seed sequence for the stream addressed by ``path`` under ``master``."""
    return np.random.SeedSequence(entropy=int(master), spawn_key=tuple(int(p) for p in path))


def derive_rng(master: int, *path: int) -> np.random.Generator:
    """Independent Philox stream for (master, *path); same inputs, same stream."""
    return np.random.Generator(np.random.Philox(derive_seedseq(master, *path)))
