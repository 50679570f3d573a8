"""Dense float64 arrays with reverse-mode automatic differentiation.

Every value is a `Tensor` wrapping a row-major float64 ndarray.  Applying a
primitive records the operation and its parents on the result, so that
`backward()` on a scalar loss replays the graph in reverse topological order
and accumulates gradients into the `requires_grad` leaves.  Graphs are
define-by-run: each forward pass builds a fresh record, so independent passes
never share gradient state.
"""

from __future__ import annotations

import numpy as np

__all__ = [
    "Tensor",
    "ShapeMismatchError",
    "NonFiniteError",
    "as_tensor",
    "no_grad",
    "forward_backward",
    "concat_cols",
    "interleave_rows",
]


class ShapeMismatchError(ValueError):
    """Operand shapes are incompatible for the named primitive."""


class NonFiniteError(FloatingPointError):
    """A loss or gradient contains NaN or infinity."""


_grad_enabled = True


class no_grad:
    """Context manager that disables graph recording (e.g. teacher passes)."""

    def __enter__(self):
        global _grad_enabled
        self._prev = _grad_enabled
        _grad_enabled = False
        return self

    def __exit__(self, *exc):
        global _grad_enabled
        _grad_enabled = self._prev
        return False


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum `grad` over broadcast axes so it matches the original `shape`."""
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


def _axis_tuple(axis, ndim):
    if axis is None:
        return tuple(range(ndim))
    if isinstance(axis, int):
        return (axis % ndim,)
    return tuple(a % ndim for a in axis)


class Tensor:
    """A float64 array plus optional gradient bookkeeping."""

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward_fn", "_op")

    def __init__(self, data, requires_grad: bool = False):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad: np.ndarray | None = None
        self.requires_grad = bool(requires_grad)
        self._parents: tuple = ()
        self._backward_fn = None
        self._op = "leaf"

    # -- construction helpers -------------------------------------------------

    @staticmethod
    def _make(data, parents, backward_fn, op):
        """Internal: build a recorded intermediate node."""
        out = Tensor(data)
        if _grad_enabled and any(p.requires_grad for p in parents):
            out.requires_grad = True
            out._parents = tuple(parents)
            out._backward_fn = backward_fn
            out._op = op
        return out

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def size(self):
        return self.data.size

    def item(self) -> float:
        if self.data.size != 1:
            raise ShapeMismatchError(f"item: tensor has shape {self.shape}, not scalar")
        return float(self.data.reshape(()))

    def detach(self) -> "Tensor":
        """A view of the same data with no graph history."""
        return Tensor(self.data)

    def zero_grad(self):
        self.grad = None

    def __repr__(self):
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}{flag})"

    # -- elementwise binary ops -----------------------------------------------

    def _binary(self, other, fwd, bwd, op):
        other = as_tensor(other)
        try:
            np.broadcast_shapes(self.shape, other.shape)
        except ValueError:
            raise ShapeMismatchError(
                f"{op}: cannot broadcast {self.shape} with {other.shape}"
            ) from None
        out_data = fwd(self.data, other.data)
        a_shape, b_shape = self.shape, other.shape

        def backward_fn(g):
            ga, gb = bwd(g, self.data, other.data, out_data)
            return (
                _unbroadcast(ga, a_shape) if ga is not None else None,
                _unbroadcast(gb, b_shape) if gb is not None else None,
            )

        return Tensor._make(out_data, (self, other), backward_fn, op)

    def __add__(self, other):
        return self._binary(other, np.add, lambda g, a, b, o: (g, g), "add")

    def __radd__(self, other):
        return as_tensor(other).__add__(self)

    def __sub__(self, other):
        return self._binary(other, np.subtract, lambda g, a, b, o: (g, -g), "sub")

    def __rsub__(self, other):
        return as_tensor(other).__sub__(self)

    def __mul__(self, other):
        return self._binary(other, np.multiply, lambda g, a, b, o: (g * b, g * a), "mul")

    def __rmul__(self, other):
        return as_tensor(other).__mul__(self)

    def __truediv__(self, other):
        return self._binary(
            other,
            np.divide,
            lambda g, a, b, o: (g / b, -g * a / (b * b)),
            "div",
        )

    def __rtruediv__(self, other):
        return as_tensor(other).__truediv__(self)

    def __neg__(self):
        return Tensor._make(-self.data, (self,), lambda g: (-g,), "neg")

    def __pow__(self, p):
        if not isinstance(p, (int, float)):
            raise TypeError("pow: exponent must be a Python scalar")
        data = self.data

        def backward_fn(g):
            return (g * p * data ** (p - 1),)

        return Tensor._make(data**p, (self,), backward_fn, "pow")

    # -- elementwise unary ops ------------------------------------------------

    def exp(self):
        out_data = np.exp(self.data)
        return Tensor._make(out_data, (self,), lambda g: (g * out_data,), "exp")

    def log(self):
        data = self.data
        return Tensor._make(np.log(data), (self,), lambda g: (g / data,), "log")

    def sqrt(self):
        out_data = np.sqrt(self.data)
        return Tensor._make(out_data, (self,), lambda g: (g / (2.0 * out_data),), "sqrt")

    def tanh(self):
        out_data = np.tanh(self.data)
        return Tensor._make(
            out_data, (self,), lambda g: (g * (1.0 - out_data * out_data),), "tanh"
        )

    def relu(self):
        mask = self.data > 0
        return Tensor._make(
            np.where(mask, self.data, 0.0), (self,), lambda g: (g * mask,), "relu"
        )

    def clamp_min(self, floor: float):
        """max(x, floor); gradient is zero where the floor is active."""
        mask = self.data > floor
        return Tensor._make(
            np.where(mask, self.data, floor), (self,), lambda g: (g * mask,), "clamp_min"
        )

    def abs(self):
        sign = np.sign(self.data)
        return Tensor._make(np.abs(self.data), (self,), lambda g: (g * sign,), "abs")

    # -- matmul -----------------------------------------------------------------

    def __matmul__(self, other):
        other = as_tensor(other)
        if self.ndim != 2 or other.ndim != 2 or self.shape[1] != other.shape[0]:
            raise ShapeMismatchError(
                f"matmul: incompatible shapes {self.shape} @ {other.shape}"
            )
        a, b = self.data, other.data

        def backward_fn(g):
            return (g @ b.T, a.T @ g)

        return Tensor._make(a @ b, (self, other), backward_fn, "matmul")

    # -- reductions --------------------------------------------------------------

    def sum(self, axis=None, keepdims: bool = False):
        shape = self.shape

        def backward_fn(g):
            if axis is not None and not keepdims:
                g = np.expand_dims(g, _axis_tuple(axis, len(shape)))
            return (np.broadcast_to(g, shape).copy(),)

        return Tensor._make(
            self.data.sum(axis=axis, keepdims=keepdims), (self,), backward_fn, "sum"
        )

    def mean(self, axis=None, keepdims: bool = False):
        shape = self.shape
        axes = _axis_tuple(axis, len(shape))
        count = 1
        for a in axes:
            count *= shape[a]

        def backward_fn(g):
            if axis is not None and not keepdims:
                g = np.expand_dims(g, axes)
            return (np.broadcast_to(g / count, shape).copy(),)

        return Tensor._make(
            self.data.mean(axis=axis, keepdims=keepdims), (self,), backward_fn, "mean"
        )

    def logsumexp(self, axis: int, keepdims: bool = False):
        """Numerically stable log-sum-exp along one axis."""
        ax = axis % self.ndim
        m = np.max(self.data, axis=ax, keepdims=True)
        m = np.where(np.isfinite(m), m, 0.0)
        out_keep = m + np.log(np.exp(self.data - m).sum(axis=ax, keepdims=True))
        soft = np.exp(self.data - out_keep)

        def backward_fn(g):
            if not keepdims:
                g = np.expand_dims(g, ax)
            return (g * soft,)

        out_data = out_keep if keepdims else np.squeeze(out_keep, axis=ax)
        return Tensor._make(out_data, (self,), backward_fn, "logsumexp")

    # -- shape ops -----------------------------------------------------------------

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        old = self.shape
        return Tensor._make(
            self.data.reshape(shape), (self,), lambda g: (g.reshape(old),), "reshape"
        )

    def transpose(self, axes=None):
        inv = None if axes is None else tuple(np.argsort(axes))

        def backward_fn(g):
            return (g.transpose(inv) if inv is not None else g.transpose(),)

        return Tensor._make(self.data.transpose(axes), (self,), backward_fn, "transpose")

    @property
    def T(self):
        return self.transpose()

    def narrow(self, axis: int, start: int, length: int):
        """Contiguous slice along one axis; backward zero-pads."""
        ax = axis % self.ndim
        if start < 0 or start + length > self.shape[ax]:
            raise ShapeMismatchError(
                f"narrow: [{start}:{start + length}] out of range for axis {ax} "
                f"of shape {self.shape}"
            )
        idx = tuple(
            slice(start, start + length) if i == ax else slice(None)
            for i in range(self.ndim)
        )
        shape = self.shape

        def backward_fn(g):
            full = np.zeros(shape)
            full[idx] = g
            return (full,)

        return Tensor._make(self.data[idx], (self,), backward_fn, "narrow")

    def take_rows(self, indices):
        """Gather rows (axis 0) by integer index; backward scatter-adds."""
        idx = np.asarray(indices, dtype=np.intp)
        shape = self.shape

        def backward_fn(g):
            full = np.zeros(shape)
            np.add.at(full, idx, g)
            return (full,)

        return Tensor._make(self.data[idx], (self,), backward_fn, "take_rows")

    def take_at(self, row_indices, col_indices):
        """Gather matrix elements at (row, col) pairs; backward scatter-adds."""
        if self.ndim != 2:
            raise ShapeMismatchError(f"take_at: expected 2D tensor, got {self.shape}")
        rows = np.asarray(row_indices, dtype=np.intp)
        cols = np.asarray(col_indices, dtype=np.intp)
        shape = self.shape

        def backward_fn(g):
            full = np.zeros(shape)
            np.add.at(full, (rows, cols), g)
            return (full,)

        return Tensor._make(self.data[rows, cols], (self,), backward_fn, "take_at")

    def dropout(self, rate: float, rng: np.random.Generator, training: bool = True):
        """Inverted dropout; identity when rate is 0 or not training."""
        if not (0.0 <= rate < 1.0):
            raise ValueError(f"dropout: rate must be in [0, 1), got {rate}")
        if not training or rate == 0.0:
            return self
        keep = (rng.random(self.shape) >= rate) / (1.0 - rate)
        return Tensor._make(self.data * keep, (self,), lambda g: (g * keep,), "dropout")

    # -- autodiff ---------------------------------------------------------------

    def backward(self):
        """Accumulate d(self)/d(leaf) into every reachable requires_grad leaf."""
        if self.data.size != 1:
            raise ShapeMismatchError(
                f"backward: loss must be scalar, got shape {self.shape}"
            )
        if not np.isfinite(self.data).all():
            raise NonFiniteError("backward: loss is not finite")

        order: list[Tensor] = []
        seen = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                order.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if p.requires_grad and id(p) not in seen:
                    stack.append((p, False))

        grads: dict[int, np.ndarray] = {id(self): np.ones_like(self.data)}
        for node in reversed(order):
            g = grads.pop(id(node), None)
            if g is None:
                continue
            if node._backward_fn is None:
                if node.requires_grad:
                    node.grad = g if node.grad is None else node.grad + g
                continue
            for parent, pg in zip(node._parents, node._backward_fn(g)):
                if pg is None or not parent.requires_grad:
                    continue
                key = id(parent)
                if key in grads:
                    grads[key] = grads[key] + pg
                else:
                    grads[key] = pg


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def concat_cols(tensors) -> Tensor:
    """Concatenate 2D tensors along columns; backward splits the gradient."""
    tensors = [as_tensor(t) for t in tensors]
    rows = tensors[0].shape[0]
    for t in tensors:
        if t.ndim != 2 or t.shape[0] != rows:
            raise ShapeMismatchError(
                f"concat_cols: row counts differ: {[t.shape for t in tensors]}"
            )
    widths = [t.shape[1] for t in tensors]
    edges = np.cumsum([0] + widths)

    def backward_fn(g):
        return tuple(g[:, edges[i] : edges[i + 1]] for i in range(len(tensors)))

    data = np.concatenate([t.data for t in tensors], axis=1)
    return Tensor._make(data, tuple(tensors), backward_fn, "concat_cols")


def interleave_rows(a: Tensor, b: Tensor) -> Tensor:
    """Alternate rows of two (T, D) tensors into (2T, D): a0, b0, a1, b1, ..."""
    a, b = as_tensor(a), as_tensor(b)
    if a.shape != b.shape or a.ndim != 2:
        raise ShapeMismatchError(
            f"interleave_rows: need equal 2D shapes, got {a.shape} and {b.shape}"
        )
    t, d = a.shape
    data = np.empty((2 * t, d))
    data[0::2] = a.data
    data[1::2] = b.data

    def backward_fn(g):
        return (g[0::2], g[1::2])

    return Tensor._make(data, (a, b), backward_fn, "interleave_rows")


def forward_backward(loss_fn, params):
    """Zero param grads, evaluate `loss_fn()` and backpropagate.

    Returns (loss value, list of gradients aligned with `params`).  Raises
    NonFiniteError if the loss or any gradient is NaN/inf.
    """
    for p in params:
        p.grad = None
    loss = loss_fn()
    if not isinstance(loss, Tensor):
        raise TypeError("forward_backward: loss_fn must return a Tensor")
    loss.backward()
    grads = []
    for p in params:
        if p.grad is None:
            p.grad = np.zeros_like(p.data)
        if not np.isfinite(p.grad).all():
            raise NonFiniteError("forward_backward: gradient is not finite")
        grads.append(p.grad)
    return loss.item(), grads
