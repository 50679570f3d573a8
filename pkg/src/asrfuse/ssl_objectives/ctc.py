"""CTC loss via the forward-backward algorithm in log space."""

from __future__ import annotations

import numpy as np

from ..numcore import Tensor, as_tensor
from ..numcore.tensor import ShapeMismatchError

__all__ = ["ctc_loss", "min_frames_for"]

NEG_INF = -np.inf


def min_frames_for(labels) -> int:
    """Shortest frame count that can emit `labels` (repeats need a blank)."""
    labels = list(labels)
    repeats = sum(1 for a, b in zip(labels, labels[1:]) if a == b)
    return len(labels) + repeats


def _log_add(a, b):
    if a == NEG_INF:
        return b
    if b == NEG_INF:
        return a
    m = max(a, b)
    return m + np.log(np.exp(a - m) + np.exp(b - m))


def ctc_loss(log_probs, labels, blank: int) -> Tensor:
    """-ln of the total probability of all frame paths collapsing to `labels`.

    `log_probs` is (T, C) with one column per symbol including the blank.
    The gradient (the negated symbol posterior) is exact for arbitrary inputs,
    so the loss is finite-difference checkable.
    """
    log_probs = as_tensor(log_probs)
    if log_probs.ndim != 2:
        raise ShapeMismatchError(f"ctc_loss: expected (T, C) scores, got {log_probs.shape}")
    t_len, n_sym = log_probs.shape
    labels = [int(l) for l in labels]
    if not (0 <= blank < n_sym):
        raise ValueError(f"ctc_loss: blank index {blank} outside [0, {n_sym})")
    for l in labels:
        if not (0 <= l < n_sym) or l == blank:
            raise ValueError(f"ctc_loss: label {l} invalid for {n_sym} symbols with blank {blank}")
    if t_len < min_frames_for(labels):
        raise ValueError(
            f"ctc_loss: label of length {len(labels)} needs at least "
            f"{min_frames_for(labels)} frames, got {t_len}"
        )

    # extended label sequence: blank, l1, blank, l2, ..., blank
    ext = [blank]
    for l in labels:
        ext += [l, blank]
    s_len = len(ext)
    y = log_probs.data

    alpha = np.full((t_len, s_len), NEG_INF)
    alpha[0, 0] = y[0, ext[0]]
    if s_len > 1:
        alpha[0, 1] = y[0, ext[1]]
    for t in range(1, t_len):
        for s in range(s_len):
            a = alpha[t - 1, s]
            if s >= 1:
                a = _log_add(a, alpha[t - 1, s - 1])
            if s >= 2 and ext[s] != blank and ext[s] != ext[s - 2]:
                a = _log_add(a, alpha[t - 1, s - 2])
            alpha[t, s] = a + y[t, ext[s]]

    log_z = alpha[t_len - 1, s_len - 1]
    if s_len > 1:
        log_z = _log_add(log_z, alpha[t_len - 1, s_len - 2])

    beta = np.full((t_len, s_len), NEG_INF)
    beta[t_len - 1, s_len - 1] = y[t_len - 1, ext[s_len - 1]]
    if s_len > 1:
        beta[t_len - 1, s_len - 2] = y[t_len - 1, ext[s_len - 2]]
    for t in range(t_len - 2, -1, -1):
        for s in range(s_len):
            b = beta[t + 1, s]
            if s + 1 < s_len:
                b = _log_add(b, beta[t + 1, s + 1])
            if s + 2 < s_len and ext[s] != blank and ext[s] != ext[s + 2]:
                b = _log_add(b, beta[t + 1, s + 2])
            beta[t, s] = b + y[t, ext[s]]

    # posterior over extended states; alpha and beta both include y[t, ext[s]]
    with np.errstate(invalid="ignore"):
        gamma = alpha + beta - y[:, ext] - log_z
    gamma[~np.isfinite(gamma)] = NEG_INF

    grad_y = np.zeros_like(y)
    post = np.exp(gamma)
    for s, sym in enumerate(ext):
        grad_y[:, sym] -= post[:, s]

    def backward_fn(g):
        return (g * grad_y,)

    return Tensor._make(np.asarray(-log_z), (log_probs,), backward_fn, "ctc_loss")
