"""WER breakdowns, matched-pairs significance, and detection metrics."""

from asrfuse.scoring import (
    ScoredTranscriptSet,
    classification_metrics,
    majority_vote,
    mapsswe,
    wer,
)

refs = {
    "u1": "the cat sat on the mat",
    "u2": "a stitch in time saves nine",
    "u3": "call the doctor",
    "u4": "watch the window",
}
meta = {
    "u1": {"intelligibility": "VL", "seen": "seen"},
    "u2": {"intelligibility": "VL", "seen": "unseen"},
    "u3": {"intelligibility": "H", "seen": "seen"},
    "u4": {"intelligibility": "H", "seen": "unseen"},
}
system_a = {
    "u1": "the cat sat on a mat",
    "u2": "a stitch in time saved nine",
    "u3": "call a doctor",
    "u4": "watch the window",
}
system_b = {
    "u1": "the cat sat on the mat",
    "u2": "a stitch in time saves nine",
    "u3": "call the doctor",
    "u4": "watch that window",
}

set_a = ScoredTranscriptSet.from_texts(refs, system_a, meta)
set_b = ScoredTranscriptSet.from_texts(refs, system_b, meta)

for name, tset in [("A", set_a), ("B", set_b)]:
    overall, groups = wer(tset, group_by="intelligibility")
    print(f"system {name}: WER {overall:.2f}%  by intelligibility {groups}")

report = mapsswe(set_a, set_b, alpha=0.05)
print(f"MAPSSWE: Z={report.z:.3f} p={report.p:.3f} "
      f"-> {'significant' if report.significant else 'not significant'}")

# detection metrics with majority voting across three unstable classifiers
votes = [
    ["AD", "AD", "HC", "HC", "AD"],
    ["AD", "HC", "HC", "HC", "AD"],
    ["HC", "AD", "HC", "AD", "AD"],
]
labels = ["AD", "AD", "HC", "HC", "AD"]
fused = majority_vote(votes, positive="AD")
metrics = classification_metrics(fused, labels, positive="AD")
print(f"majority vote: {fused}")
print(f"accuracy {metrics['accuracy']:.2f}%  sensitivity {metrics['sensitivity']:.2f}%"
      f"  specificity {metrics['specificity']:.2f}%")
