"""The four self-supervised objectives on a desk-scale context network.

Each objective trains for 50 steps on one synthetic utterance and reports the
loss trajectory.  The analytic sanity points (uniform contrastive = ln 10,
uniform diversity = -alpha*ln(V)/V) are printed first.
"""

import math

import numpy as np

from asrfuse.numcore import Tensor, make_rng
from asrfuse.ssl_objectives import contrastive_loss, diversity_loss
from asrfuse.ssl_objectives.trainers import (
    SslConfig,
    build_ssl_model,
    make_synthetic_utterances,
    train_ssl,
)

# analytic sanity: all candidates equal -> cross-entropy of a uniform softmax
q = Tensor(np.tile([0.6, 0.8], (4, 1)))
c = Tensor(make_rng(0).normal(size=(4, 2)))
lc = contrastive_loss(c, q, np.arange(4), num_distractors=9, kappa=0.1,
                      rng=make_rng(1)).item()
print(f"uniform contrastive loss: {lc:.6f}  (ln 10 = {math.log(10):.6f})")

soft = Tensor(np.full((5, 2, 4), 0.25))
ld = diversity_loss(soft, alpha=1.0).item()
print(f"uniform diversity loss:   {ld:.6f}  (-ln(4)/4 = {-math.log(4)/4:.6f})")

for objective in ("wav2vec2", "hubert", "data2vec", "ctc"):
    cfg = SslConfig(objective=objective, d_in=4, n_blocks=2, d_model=16,
                    n_heads=2, d_ff=32, num_codebooks=2, entries=4, code_dim=8,
                    mask_probability=0.2, mask_span=3, num_distractors=4, vocab=3,
                    top_k=2)
    model = build_ssl_model(cfg, seed=1)
    utts = make_synthetic_utterances(cfg, n_utts=1, frames_per_utt=30, seed=2)
    log, _ = train_ssl(model, utts, epochs=50, seed=3)
    print(f"{objective:9s} loss: {log[0]['loss']:8.4f} -> {log[-1]['loss']:8.4f} "
          f"over {len(log)} steps")
