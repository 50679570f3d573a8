"""System combination: frame-level joint decoding and N-best rescoring.

Frame-level fusion linearly interpolates per-frame token log-likelihood
matrices across systems and reads out the greedy per-frame argmax.  Rescoring
combines named per-hypothesis costs (lower is better) and re-ranks.  Weight
presets follow the published system-combination recipes; weights are stored as
the reported ratios since the argmax is invariant to their overall scale.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "FrameScoreStream",
    "Hypothesis",
    "NBestList",
    "CombinationWeights",
    "JOINT_PRESETS",
    "RESCORE_PRESETS",
    "joint_decode",
    "rescore_nbest",
    "grid_search_weights",
    "truncate_nbest",
]


@dataclass
class FrameScoreStream:
    """Per-frame log-likelihoods over a shared token inventory."""

    utt_id: str
    tokens: list
    scores: np.ndarray
    frame_period_ms: float = 10.0

    def __post_init__(self):
        self.scores = np.asarray(self.scores, dtype=np.float64)
        if not self.tokens:
            raise ValueError(f"{self.utt_id}: empty token inventory")
        if self.scores.ndim != 2 or self.scores.shape[0] < 1:
            raise ValueError(f"{self.utt_id}: scores must be (T, |V|) with T >= 1")
        if self.scores.shape[1] != len(self.tokens):
            raise ValueError(
                f"{self.utt_id}: {self.scores.shape[1]} score columns for "
                f"{len(self.tokens)} tokens"
            )
        if not np.isfinite(self.scores).all():
            raise ValueError(f"{self.utt_id}: non-finite scores")

    @property
    def num_frames(self):
        return self.scores.shape[0]

    def argmax_tokens(self) -> list:
        """Greedy per-frame readout; ties go to the lowest token index."""
        return [self.tokens[i] for i in self.scores.argmax(axis=1)]


@dataclass
class Hypothesis:
    text: str
    tokens: list
    scores: dict


@dataclass
class NBestList:
    utt_id: str
    hyps: list

    def __post_init__(self):
        if len(self.hyps) < 1:
            raise ValueError(f"{self.utt_id}: empty N-best list")
        names = set(self.hyps[0].scores)
        for i, h in enumerate(self.hyps[1:], start=1):
            if set(h.scores) != names:
                raise ValueError(
                    f"{self.utt_id}: hypothesis {i} score names {sorted(h.scores)} "
                    f"differ from {sorted(names)}"
                )


@dataclass
class CombinationWeights:
    """Non-negative weights per stream (positional) or per score name."""

    values: tuple
    names: tuple | None = None

    def __post_init__(self):
        self.values = tuple(float(v) for v in self.values)
        if any(v < 0 for v in self.values):
            raise ValueError("combination weights must be non-negative")
        if not any(v > 0 for v in self.values):
            raise ValueError("at least one combination weight must be positive")
        if self.names is not None and len(self.names) != len(self.values):
            raise ValueError("names and values length mismatch")

    def as_dict(self) -> dict:
        if self.names is None:
            raise ValueError("these weights are positional, not named")
        return dict(zip(self.names, self.values))


# published presets: ratios for 2-way/3-way frame-level joint decoding and
# the CTC:attention:TDNN rescoring interpolations
JOINT_PRESETS = {
    "uaspeech-2way-a": CombinationWeights((9.0, 8.0)),
    "uaspeech-2way-b": CombinationWeights((7.0, 9.0)),
    "uaspeech-3way": CombinationWeights((8.0, 5.0, 5.0)),
    "pitt-3way": CombinationWeights((5.0, 2.0, 8.0)),
}
RESCORE_PRESETS = {
    "uaspeech-rescore": CombinationWeights((0.9, 0.001, 0.1),
                                           names=("ctc", "attention", "tdnn")),
    "pitt-rescore": CombinationWeights((1.0, 0.05, 0.0075),
                                       names=("ctc", "attention", "tdnn")),
}


def _weight_values(weights, expected: int) -> tuple:
    values = weights.values if isinstance(weights, CombinationWeights) else tuple(weights)
    if len(values) != expected:
        raise ValueError(f"{len(values)} weights for {expected} systems")
    CombinationWeights(values)  # validate
    return tuple(float(v) for v in values)


def joint_decode(streams: list, weights):
    """Fuse streams by weighted sums of per-frame log-likelihoods.

    Returns (fused stream, greedy argmax token sequence).  All streams must
    share utt_id, frame count, frame period and token inventory.
    """
    if not streams:
        raise ValueError("joint_decode: empty stream list")
    first = streams[0]
    for s in streams[1:]:
        if s.utt_id != first.utt_id:
            raise ValueError(f"joint_decode: utt ids differ: {first.utt_id} vs {s.utt_id}")
        if s.tokens != first.tokens:
            raise ValueError(f"{first.utt_id}: token inventories differ across streams")
        if s.num_frames != first.num_frames:
            raise ValueError(
                f"{first.utt_id}: frame counts differ: {first.num_frames} vs {s.num_frames}"
            )
        if s.frame_period_ms != first.frame_period_ms:
            raise ValueError(f"{first.utt_id}: frame periods differ across streams")
    values = _weight_values(weights, len(streams))
    fused_scores = sum(w * s.scores for w, s in zip(values, streams))
    fused = FrameScoreStream(first.utt_id, list(first.tokens), fused_scores,
                             first.frame_period_ms)
    return fused, fused.argmax_tokens()


def rescore_nbest(nbest: NBestList, weights):
    """Combine named costs per hypothesis and re-rank ascending.

    Returns (best hypothesis, re-ranked NBestList).  Ties keep the original
    rank order; each output hypothesis gains a "combined" score entry.
    """
    named = weights.as_dict() if isinstance(weights, CombinationWeights) else dict(weights)
    CombinationWeights(tuple(named.values()))  # validate
    combined = []
    for i, hyp in enumerate(nbest.hyps):
        total = 0.0
        for name, w in named.items():
            if name not in hyp.scores:
                raise ValueError(
                    f"{nbest.utt_id}: hypothesis {i} is missing score {name!r}"
                )
            total += w * hyp.scores[name]
        combined.append(total)
    order = sorted(range(len(combined)), key=lambda i: (combined[i], i))
    reranked = NBestList(nbest.utt_id, [
        Hypothesis(nbest.hyps[i].text, list(nbest.hyps[i].tokens),
                   {**nbest.hyps[i].scores, "combined": combined[i]})
        for i in order
    ])
    return reranked.hyps[0], reranked


def truncate_nbest(nbest: NBestList, n: int = 30) -> NBestList:
    """Keep the top-n hypotheses by original rank (N=30 by default)."""
    if n < 1:
        raise ValueError("n must be >= 1")
    return NBestList(nbest.utt_id, list(nbest.hyps[:n]))


def simplex_grid(num_systems: int, step: float):
    """All weight vectors on the simplex at the given resolution, ascending
    lexicographically.  The grid spacing is 1/round(1/step)."""
    if not (0.0 < step <= 1.0):
        raise ValueError(f"grid step must be in (0, 1], got {step}")
    n = max(1, round(1.0 / step))
    points = []

    def rec(prefix, remaining, slots):
        if slots == 1:
            points.append(prefix + (remaining,))
            return
        for i in range(remaining + 1):
            rec(prefix + (i,), remaining - i, slots - 1)

    rec((), n, num_systems)
    points.sort()
    return [tuple(p / n for p in pt) for pt in points]


def grid_search_weights(dev_data, num_systems: int, scorer, step: float = 0.1):
    """Exhaustive search over the normalized weight simplex.

    `scorer(weights, dev_data)` returns the value to minimize (e.g. dev WER).
    Ties resolve to the lexicographically smallest weight vector.
    """
    if num_systems < 1:
        raise ValueError("need at least one system")
    best_weights, best_score = None, None
    for weights in simplex_grid(num_systems, step):
        score = float(scorer(weights, dev_data))
        if not np.isfinite(score):
            raise ValueError(f"scorer returned non-finite value for weights {weights}")
        if best_score is None or score < best_score:
            best_weights, best_score = weights, score
    return CombinationWeights(best_weights), best_score
