"""Span masking for masked-prediction and contrastive objectives."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = ["MaskSpec", "MaskSample"]


@dataclass(frozen=True)
class MaskSample:
    """Sampled mask: span start indices and the covered frame index set."""

    starts: np.ndarray
    indices: np.ndarray

    def __len__(self):
        return len(self.indices)


@dataclass(frozen=True)
class MaskSpec:
    """Each frame starts a masked span of `span` frames with prob `probability`.

    Spans may overlap; the covered set is their union, clipped to the sequence.
    """

    probability: float = 0.065
    span: int = 10

    def __post_init__(self):
        if not (0.0 <= self.probability <= 1.0):
            raise ValueError(f"mask probability must be in [0, 1], got {self.probability}")
        if self.span < 1:
            raise ValueError(f"mask span must be >= 1, got {self.span}")

    def sample(self, length: int, rng: np.random.Generator) -> MaskSample:
        if length < 1:
            raise ValueError("sequence length must be >= 1")
        starts = np.flatnonzero(rng.random(length) < self.probability)
        covered = np.zeros(length, dtype=bool)
        for s in starts:
            covered[s : s + self.span] = True
        return MaskSample(starts=starts, indices=np.flatnonzero(covered))
