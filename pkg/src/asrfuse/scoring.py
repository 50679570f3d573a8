"""WER/CER scoring, MAPSSWE significance testing, classification metrics."""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "AlignmentResult",
    "TranscriptRecord",
    "ScoredTranscriptSet",
    "SignificanceReport",
    "tokenize",
    "align_and_count",
    "wer",
    "mapsswe",
    "classification_metrics",
    "majority_vote",
]


def tokenize(text: str, mode: str = "word") -> list:
    """Case-folded tokens: whitespace words, or characters excluding spaces."""
    text = text.strip().lower()
    if mode == "word":
        return text.split()
    if mode == "char":
        return [c for c in text if not c.isspace()]
    raise ValueError(f"unknown tokenization mode {mode!r}")


@dataclass
class AlignmentResult:
    substitutions: int
    deletions: int
    insertions: int
    ref_length: int
    pairs: list = field(default_factory=list)

    @property
    def errors(self) -> int:
        return self.substitutions + self.deletions + self.insertions

    @property
    def wer_percent(self) -> float:
        return 100.0 * self.errors / self.ref_length


def align_and_count(ref: list, hyp: list) -> AlignmentResult:
    """Minimum edit distance with unit costs and a deterministic backtrace.

    Cost ties prefer substitution/match over insertion over deletion.  The
    aligned pairs use None for the missing side of insertions and deletions.
    """
    if not ref:
        raise ValueError("align_and_count: empty reference")
    r, h = len(ref), len(hyp)
    dist = [list(range(h + 1))]
    for i in range(1, r + 1):
        prev = dist[-1]
        row = [i] + [0] * h
        for j in range(1, h + 1):
            row[j] = min(
                prev[j - 1] + (ref[i - 1] != hyp[j - 1]),
                row[j - 1] + 1,
                prev[j] + 1,
            )
        dist.append(row)

    subs = dels = inss = 0
    pairs = []
    i, j = r, h
    while i > 0 or j > 0:
        if i > 0 and j > 0 and dist[i][j] == dist[i - 1][j - 1] + (ref[i - 1] != hyp[j - 1]):
            if ref[i - 1] != hyp[j - 1]:
                subs += 1
            pairs.append((ref[i - 1], hyp[j - 1]))
            i, j = i - 1, j - 1
        elif j > 0 and dist[i][j] == dist[i][j - 1] + 1:
            inss += 1
            pairs.append((None, hyp[j - 1]))
            j -= 1
        else:
            dels += 1
            pairs.append((ref[i - 1], None))
            i -= 1
    pairs.reverse()
    return AlignmentResult(subs, dels, inss, r, pairs)


@dataclass
class TranscriptRecord:
    utt_id: str
    ref: list
    hyp: list
    metadata: dict = field(default_factory=dict)


class ScoredTranscriptSet:
    """Aligned reference/hypothesis records with per-utterance metadata."""

    def __init__(self, records: list):
        seen = set()
        for rec in records:
            if rec.utt_id in seen:
                raise ValueError(f"duplicate utt_id {rec.utt_id!r}")
            seen.add(rec.utt_id)
            if not rec.ref:
                raise ValueError(f"{rec.utt_id}: empty reference")
        self.records = list(records)

    def __len__(self):
        return len(self.records)

    @classmethod
    def from_texts(cls, refs: dict, hyps: dict, metadata: dict | None = None,
                   mode: str = "word"):
        """Build from utt_id -> text maps; `mode` selects WER or CER tokens."""
        missing = sorted(set(refs) - set(hyps))
        if missing:
            raise ValueError(f"hypotheses missing for {len(missing)} utts, "
                             f"first 10: {missing[:10]}")
        metadata = metadata or {}
        records = [
            TranscriptRecord(utt_id, tokenize(refs[utt_id], mode),
                             tokenize(hyps[utt_id], mode),
                             dict(metadata.get(utt_id, {})))
            for utt_id in sorted(refs)
        ]
        return cls(records)


def wer(tset: ScoredTranscriptSet, group_by: str | None = None):
    """Pooled error rate in percent: 100 * (S + D + I) / total ref length.

    With `group_by`, also returns per-group rates keyed by that metadata
    value.  Unknown metadata keys raise.
    """
    totals = Counter()
    group_totals: dict = {}
    for rec in tset.records:
        result = align_and_count(rec.ref, rec.hyp)
        totals["errors"] += result.errors
        totals["ref"] += result.ref_length
        if group_by is not None:
            if group_by not in rec.metadata:
                raise KeyError(f"{rec.utt_id}: no metadata key {group_by!r}")
            key = rec.metadata[group_by]
            bucket = group_totals.setdefault(key, Counter())
            bucket["errors"] += result.errors
            bucket["ref"] += result.ref_length
    overall = 100.0 * totals["errors"] / totals["ref"]
    if group_by is None:
        return overall, None
    groups = {k: 100.0 * v["errors"] / v["ref"] for k, v in sorted(group_totals.items())}
    return overall, groups


@dataclass
class SignificanceReport:
    differences: list
    z: float | None
    p: float | None
    significant: bool
    degenerate: bool
    alpha: float

    @property
    def marker(self) -> str:
        """Table marker: dagger when significant, blank otherwise."""
        return "†" if self.significant else ""


def mapsswe(set_a: ScoredTranscriptSet, set_b: ScoredTranscriptSet,
            alpha: float = 0.05) -> SignificanceReport:
    """Matched-pairs test on per-utterance error-count differences.

    Segments are utterances; Z = mean(d) / (sample std(d) / sqrt(n)) with the
    two-sided normal p-value.  Zero-variance or n < 2 cases are reported as
    degenerate instead of producing a Z score.
    """
    ids_a = [r.utt_id for r in set_a.records]
    ids_b = [r.utt_id for r in set_b.records]
    if ids_a != ids_b:
        raise ValueError("mapsswe: utterance sets differ")
    for ra, rb in zip(set_a.records, set_b.records):
        if ra.ref != rb.ref:
            raise ValueError(f"mapsswe: references differ at {ra.utt_id}")
    diffs = [
        align_and_count(ra.ref, ra.hyp).errors - align_and_count(rb.ref, rb.hyp).errors
        for ra, rb in zip(set_a.records, set_b.records)
    ]
    n = len(diffs)
    mean = float(np.mean(diffs))
    if n < 2:
        return SignificanceReport(diffs, None, None, False, True, alpha)
    std = float(np.std(diffs, ddof=1))
    if std == 0.0:
        return SignificanceReport(diffs, None, None, False, True, alpha)
    z = mean / (std / math.sqrt(n))
    p = math.erfc(abs(z) / math.sqrt(2.0))
    return SignificanceReport(diffs, z, p, p < alpha, False, alpha)


def classification_metrics(predictions: list, labels: list, positive) -> dict:
    """Accuracy, sensitivity, specificity in percent.

    Metrics whose denominator class is absent are reported as None.
    """
    if len(predictions) != len(labels):
        raise ValueError("predictions and labels must have equal length")
    if not labels:
        raise ValueError("empty inputs")
    tp = fn = tn = fp = 0
    for pred, lab in zip(predictions, labels):
        if lab == positive:
            if pred == positive:
                tp += 1
            else:
                fn += 1
        else:
            if pred == positive:
                fp += 1
            else:
                tn += 1
    total = tp + fn + tn + fp
    return {
        "accuracy": 100.0 * (tp + tn) / total,
        "sensitivity": 100.0 * tp / (tp + fn) if tp + fn else None,
        "specificity": 100.0 * tn / (tn + fp) if tn + fp else None,
    }


def majority_vote(prediction_sets: list, positive) -> list:
    """Per-subject modal label across voters; ties go to the positive class."""
    if not prediction_sets:
        raise ValueError("no voters")
    n = len(prediction_sets[0])
    for i, votes in enumerate(prediction_sets):
        if len(votes) != n:
            raise ValueError(
                f"voter {i} covers {len(votes)} subjects, expected {n}"
            )
    fused = []
    for j in range(n):
        counts = Counter(votes[j] for votes in prediction_sets)
        top = max(counts.values())
        winners = [lab for lab, c in counts.items() if c == top]
        if len(winners) == 1:
            fused.append(winners[0])
        else:
            fused.append(positive if positive in winners else sorted(winners, key=str)[0])
    return fused
