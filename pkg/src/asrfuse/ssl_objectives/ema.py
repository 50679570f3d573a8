"""Exponentially averaged teacher parameters for regression targets."""

from __future__ import annotations

import numpy as np

from ..numcore import ShapeMismatchError, Tensor

__all__ = ["EmaTeacher", "ema_update"]


class EmaTeacher:
    """Holds teacher parameter arrays mirroring the student's shapes.

    The decay rate multiplies the student: step 0 copies the student;
    afterwards teacher <- decay * student + (1 - decay) * teacher.  This is
    the reverse of the common EMA convention (where the decay multiplies the
    old teacher), so decay=1 tracks the student exactly and decay=0 freezes
    the teacher after initialization.
    """

    def __init__(self, student_params: list[Tensor], decay: float, top_k: int, n_blocks: int):
        if not (0.0 <= decay <= 1.0):
            raise ValueError(f"decay must be in [0, 1], got {decay}")
        if not (1 <= top_k <= n_blocks):
            raise ValueError(f"top_k must be in [1, {n_blocks}], got {top_k}")
        self.decay = decay
        self.top_k = top_k
        self.params = [np.array(p.data, dtype=np.float64) for p in student_params]


def ema_update(teacher: EmaTeacher, student_params: list[Tensor], step: int) -> EmaTeacher:
    """Apply one EMA step in place; step 0 is a straight copy."""
    if len(teacher.params) != len(student_params):
        raise ShapeMismatchError(
            f"ema_update: {len(teacher.params)} teacher arrays vs "
            f"{len(student_params)} student params"
        )
    for i, (t, s) in enumerate(zip(teacher.params, student_params)):
        if t.shape != s.data.shape:
            raise ShapeMismatchError(
                f"ema_update: param {i} shape {t.shape} vs student {s.data.shape}"
            )
        if step == 0:
            t[...] = s.data
        else:
            t *= 1.0 - teacher.decay
            t += teacher.decay * s.data
    return teacher
