"""Desk-scale transformer context network and its building blocks."""

from __future__ import annotations

import math

import numpy as np

from ..numcore import Tensor, concat_cols

__all__ = ["Linear", "LayerNorm", "TransformerBlock", "ContextNetwork"]


class Linear:
    def __init__(self, d_in: int, d_out: int, rng: np.random.Generator):
        scale = 1.0 / math.sqrt(d_in)
        self.w = Tensor(rng.normal(size=(d_in, d_out)) * scale, requires_grad=True)
        self.b = Tensor(np.zeros(d_out), requires_grad=True)

    def __call__(self, x: Tensor) -> Tensor:
        return x @ self.w + self.b

    def named_parameters(self):
        return [("w", self.w), ("b", self.b)]


class LayerNorm:
    def __init__(self, dim: int, eps: float = 1e-6):
        self.gamma = Tensor(np.ones(dim), requires_grad=True)
        self.beta = Tensor(np.zeros(dim), requires_grad=True)
        self.eps = eps

    def __call__(self, x: Tensor) -> Tensor:
        mu = x.mean(axis=-1, keepdims=True)
        centered = x - mu
        var = (centered * centered).mean(axis=-1, keepdims=True)
        return centered / (var + self.eps).sqrt() * self.gamma + self.beta

    def named_parameters(self):
        return [("gamma", self.gamma), ("beta", self.beta)]


def _softmax_rows(x: Tensor) -> Tensor:
    return (x - x.logsumexp(axis=-1, keepdims=True)).exp()


class TransformerBlock:
    """Pre-norm self-attention + feed-forward block over (T, d) frames."""

    def __init__(self, d_model: int, n_heads: int, d_ff: int, rng: np.random.Generator,
                 dropout: float = 0.0):
        if d_model % n_heads != 0:
            raise ValueError(f"d_model={d_model} not divisible by n_heads={n_heads}")
        self.n_heads = n_heads
        self.d_head = d_model // n_heads
        self.dropout = dropout
        self.ln1 = LayerNorm(d_model)
        self.wq = Linear(d_model, d_model, rng)
        self.wk = Linear(d_model, d_model, rng)
        self.wv = Linear(d_model, d_model, rng)
        self.wo = Linear(d_model, d_model, rng)
        self.ln2 = LayerNorm(d_model)
        self.ff1 = Linear(d_model, d_ff, rng)
        self.ff2 = Linear(d_ff, d_model, rng)

    def __call__(self, x: Tensor, rng: np.random.Generator | None = None,
                 training: bool = False) -> Tensor:
        a = self.ln1(x)
        q, k, v = self.wq(a), self.wk(a), self.wv(a)
        heads = []
        inv_sqrt = 1.0 / math.sqrt(self.d_head)
        for h in range(self.n_heads):
            lo = h * self.d_head
            qh = q.narrow(1, lo, self.d_head)
            kh = k.narrow(1, lo, self.d_head)
            vh = v.narrow(1, lo, self.d_head)
            att = _softmax_rows((qh @ kh.T) * inv_sqrt)
            heads.append(att @ vh)
        out = self.wo(concat_cols(heads))
        if training and self.dropout > 0:
            out = out.dropout(self.dropout, rng, training=True)
        x = x + out
        ff = self.ff2(self.ff1(self.ln2(x)).relu())
        if training and self.dropout > 0:
            ff = ff.dropout(self.dropout, rng, training=True)
        return x + ff

    def named_parameters(self):
        params = []
        for name, child in [("ln1", self.ln1), ("wq", self.wq), ("wk", self.wk),
                            ("wv", self.wv), ("wo", self.wo), ("ln2", self.ln2),
                            ("ff1", self.ff1), ("ff2", self.ff2)]:
            params += [(f"{name}.{p}", t) for p, t in child.named_parameters()]
        return params


class ContextNetwork:
    """Input projection followed by L transformer blocks.

    Desk-scale defaults (L=4, d=64, 4 heads, FF 128) train in seconds while
    exercising every code path.
    """

    def __init__(self, d_in: int, n_blocks: int = 4, d_model: int = 64, n_heads: int = 4,
                 d_ff: int = 128, dropout: float = 0.0, rng: np.random.Generator | None = None):
        if n_blocks < 1:
            raise ValueError("need at least one transformer block")
        rng = rng if rng is not None else np.random.default_rng(0)
        self.d_in = d_in
        self.d_model = d_model
        self.embed = Linear(d_in, d_model, rng)
        self.blocks = [
            TransformerBlock(d_model, n_heads, d_ff, rng, dropout=dropout)
            for _ in range(n_blocks)
        ]

    @property
    def n_blocks(self):
        return len(self.blocks)

    def __call__(self, x: Tensor, rng: np.random.Generator | None = None,
                 training: bool = False, collect_blocks: bool = False):
        """Run all blocks; optionally also return each block's output."""
        h = self.embed(x)
        outputs = []
        for block in self.blocks:
            h = block(h, rng=rng, training=training)
            if collect_blocks:
                outputs.append(h)
        return (h, outputs) if collect_blocks else h

    def named_parameters(self):
        params = [(f"embed.{p}", t) for p, t in self.embed.named_parameters()]
        for i, block in enumerate(self.blocks):
            params += [(f"block{i}.{p}", t) for p, t in block.named_parameters()]
        return params

    def parameters(self):
        return [t for _, t in self.named_parameters()]
