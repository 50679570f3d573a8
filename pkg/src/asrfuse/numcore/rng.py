"""Seeded random number generation.

Every stochastic API in this package takes an explicit seed or Generator, so
identical seeds give bit-identical runs.  PCG64 is the backing bit generator.
"""

from __future__ import annotations

import numpy as np

__all__ = ["make_rng", "derive_rng"]


def make_rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(seed))


def derive_rng(seed: int, *stream: int) -> np.random.Generator:
    """Independent generator for a named substream, e.g. (seed, step)."""
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence((seed, *stream))))
