"""Dense 2-D float64 tensors with reverse-mode automatic differentiation.

Every model operation in this package is built from the primitives here.
Each primitive computes its value eagerly with numpy and records a closure
that routes the output gradient to its parents, so analytic gradients for
arbitrary compositions (including unrolled recurrences) come from one
`backward()` walk over the recorded graph. Gradients accumulate with += and
must be zeroed explicitly between optimizer steps.

Inputs are never mutated; every primitive allocates a fresh value array.
"""

from __future__ import annotations

import math
from contextlib import contextmanager
from typing import Callable, Iterable, Sequence

import numpy as np

from .errors import NumericError, ShapeError

_grad_enabled = True


@contextmanager
def no_grad():
    """Disable graph recording (pure inference, finite-difference probes)."""
    global _grad_enabled
    prev = _grad_enabled
    _grad_enabled = False
    try:
        yield
    finally:
        _grad_enabled = prev


def grad_enabled() -> bool:
    return _grad_enabled


def as_matrix(value) -> np.ndarray:
    """Validate and copy arbitrary input into a finite 2-D float64 array."""
    arr = np.array(value, dtype=np.float64)
    if arr.ndim == 1:
        arr = arr.reshape(1, -1)
    if arr.ndim != 2:
        raise ShapeError(f"expected a 2-D matrix, got ndim={arr.ndim}")
    if arr.size and not np.isfinite(arr).all():
        raise NumericError("matrix contains NaN or Inf entries")
    return arr


class Tensor:
    """A graph node holding a (rows, cols) float64 value.

    Leaves are created directly; interior nodes are created by the ops
    below. `requires_grad` propagates from parents, and `backward()` on a
    1x1 node fills `.grad` on every leaf that requires it.
    """

    __slots__ = ("value", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, value, requires_grad: bool = False):
        self.value = as_matrix(value)
        self.requires_grad = requires_grad
        self.grad = np.zeros_like(self.value) if requires_grad else None
        self._parents: tuple[Tensor, ...] = ()
        self._backward: Callable[[np.ndarray], None] | None = None

    @classmethod
    def _op(cls, value: np.ndarray, parents: tuple["Tensor", ...],
            backward: Callable[[np.ndarray], None] | None) -> "Tensor":
        out = cls.__new__(cls)
        # A full-array sum is NaN or Inf iff some entry is non-finite (an
        # Inf/-Inf pair sums to NaN), and it is much cheaper than isfinite().
        if value.size and not math.isfinite(float(value.sum())):
            if not np.isfinite(value).all():
                raise NumericError("operation produced NaN or Inf entries")
        out.value = value
        out.grad = None
        needs = _grad_enabled and any(p.requires_grad for p in parents)
        out.requires_grad = needs
        if needs:
            out._parents = parents
            out._backward = backward
        else:
            out._parents = ()
            out._backward = None
        return out

    @property
    def shape(self) -> tuple[int, int]:
        return self.value.shape

    @property
    def rows(self) -> int:
        return self.value.shape[0]

    @property
    def cols(self) -> int:
        return self.value.shape[1]

    def item(self) -> float:
        if self.value.size != 1:
            raise ShapeError(f"item() on non-scalar tensor of shape {self.shape}")
        return float(self.value[0, 0])

    def _ensure_grad(self) -> np.ndarray:
        if self.grad is None:
            self.grad = np.zeros_like(self.value)
        return self.grad

    def backward(self) -> None:
        """Accumulate d(self)/d(leaf) into every requires-grad leaf."""
        if self.value.shape != (1, 1):
            raise ShapeError(f"backward() requires a 1x1 scalar, got {self.shape}")
        # Iterative topological sort; conversations unroll deep enough to
        # overflow Python's recursion limit otherwise.
        topo: list[Tensor] = []
        seen: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                topo.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for parent in node._parents:
                if id(parent) not in seen and parent.requires_grad:
                    stack.append((parent, False))
        self._ensure_grad()
        self.grad += 1.0
        for node in reversed(topo):
            if node._backward is not None:
                node._backward(node.grad)
        # Interior gradients are scratch space owned by this walk.
        for node in topo:
            if node is not self and node._backward is not None:
                node.grad = None

    # Operator sugar -------------------------------------------------------

    def __matmul__(self, other: "Tensor") -> "Tensor":
        return matmul(self, other)

    def __add__(self, other) -> "Tensor":
        if isinstance(other, Tensor):
            return add(self, other)
        return add_const(self, float(other))

    def __radd__(self, other) -> "Tensor":
        return add_const(self, float(other))

    def __sub__(self, other) -> "Tensor":
        if isinstance(other, Tensor):
            return sub(self, other)
        return add_const(self, -float(other))

    def __rsub__(self, other) -> "Tensor":
        return rsub_const(float(other), self)

    def __mul__(self, other) -> "Tensor":
        if isinstance(other, Tensor):
            return mul(self, other)
        return scale(self, float(other))

    def __rmul__(self, other) -> "Tensor":
        return scale(self, float(other))

    def __neg__(self) -> "Tensor":
        return scale(self, -1.0)

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"


def _accumulate(parent: Tensor, grad: np.ndarray, fresh: bool = False) -> None:
    """Add `grad` into the parent's buffer.

    `fresh=True` promises the array is newly allocated and unaliased, so the
    first contribution can adopt it instead of zero-filling a buffer; leaf
    parameters always keep their preallocated buffer.
    """
    if parent.requires_grad:
        if parent.grad is None:
            parent.grad = grad if fresh else grad.copy()
        else:
            parent.grad += grad


def _unbroadcast(grad: np.ndarray, shape: tuple[int, int]) -> np.ndarray:
    """Sum `grad` down to `shape`, undoing numpy broadcasting."""
    if grad.shape == shape:
        return grad
    out = grad
    if shape[0] == 1 and out.shape[0] != 1:
        out = out.sum(axis=0, keepdims=True)
    if shape[1] == 1 and out.shape[1] != 1:
        out = out.sum(axis=1, keepdims=True)
    return out


def _check_broadcast(a: Tensor, b: Tensor, opname: str) -> None:
    (ar, ac), (br, bc) = a.shape, b.shape
    if (ar != br and 1 not in (ar, br)) or (ac != bc and 1 not in (ac, bc)):
        raise ShapeError(f"{opname}: shapes {a.shape} and {b.shape} are not compatible")


# Primitives ---------------------------------------------------------------


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.cols != b.rows:
        raise ShapeError(f"matmul: inner dimensions differ, {a.shape} x {b.shape}")
    out_value = a.value @ b.value

    def backward(g: np.ndarray) -> None:
        _accumulate(a, g @ b.value.T, fresh=True)
        _accumulate(b, a.value.T @ g, fresh=True)

    return Tensor._op(out_value, (a, b), backward)


def add(a: Tensor, b: Tensor) -> Tensor:
    _check_broadcast(a, b, "add")
    out_value = a.value + b.value

    def backward(g: np.ndarray) -> None:
        ga = _unbroadcast(g, a.shape)
        gb = _unbroadcast(g, b.shape)
        _accumulate(a, ga, fresh=ga is not g)
        _accumulate(b, gb, fresh=gb is not g)

    return Tensor._op(out_value, (a, b), backward)


def sub(a: Tensor, b: Tensor) -> Tensor:
    _check_broadcast(a, b, "sub")
    out_value = a.value - b.value

    def backward(g: np.ndarray) -> None:
        ga = _unbroadcast(g, a.shape)
        _accumulate(a, ga, fresh=ga is not g)
        _accumulate(b, -_unbroadcast(g, b.shape), fresh=True)

    return Tensor._op(out_value, (a, b), backward)


def mul(a: Tensor, b: Tensor) -> Tensor:
    """Elementwise product; either side may broadcast from a 1-sized axis."""
    _check_broadcast(a, b, "mul")
    out_value = a.value * b.value

    def backward(g: np.ndarray) -> None:
        _accumulate(a, _unbroadcast(g * b.value, a.shape), fresh=True)
        _accumulate(b, _unbroadcast(g * a.value, b.shape), fresh=True)

    return Tensor._op(out_value, (a, b), backward)


def scale(a: Tensor, c: float) -> Tensor:
    out_value = a.value * c

    def backward(g: np.ndarray) -> None:
        _accumulate(a, g * c, fresh=True)

    return Tensor._op(out_value, (a,), backward)


def add_const(a: Tensor, c: float) -> Tensor:
    out_value = a.value + c

    def backward(g: np.ndarray) -> None:
        _accumulate(a, g)

    return Tensor._op(out_value, (a,), backward)


def rsub_const(c: float, a: Tensor) -> Tensor:
    out_value = c - a.value

    def backward(g: np.ndarray) -> None:
        _accumulate(a, -g, fresh=True)

    return Tensor._op(out_value, (a,), backward)


def tanh(a: Tensor) -> Tensor:
    out_value = np.tanh(a.value)

    def backward(g: np.ndarray) -> None:
        _accumulate(a, g * (1.0 - out_value * out_value), fresh=True)

    return Tensor._op(out_value, (a,), backward)


def sigmoid(a: Tensor) -> Tensor:
    # Clip so exp never overflows; the boundary error is ~1e-304.
    out_value = 1.0 / (1.0 + np.exp(-np.clip(a.value, -700.0, 700.0)))

    def backward(g: np.ndarray) -> None:
        _accumulate(a, g * out_value * (1.0 - out_value), fresh=True)

    return Tensor._op(out_value, (a,), backward)


def relu(a: Tensor) -> Tensor:
    out_value = np.maximum(a.value, 0.0)

    def backward(g: np.ndarray) -> None:
        _accumulate(a, g * (a.value > 0.0), fresh=True)

    return Tensor._op(out_value, (a,), backward)


_ELEMENTWISE = {"tanh": tanh, "sigmoid": sigmoid, "relu": relu}


def elementwise(a: Tensor, fn: str) -> Tensor:
    """Pointwise tanh / sigmoid / relu selected by name."""
    try:
        return _ELEMENTWISE[fn](a)
    except KeyError:
        raise ShapeError(f"elementwise: unknown function '{fn}'") from None


def softmax_rows_np(values: np.ndarray) -> np.ndarray:
    """Row softmax on a plain array, max-subtracted for stability."""
    shifted = values - values.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def softmax_rows(a: Tensor) -> Tensor:
    out_value = softmax_rows_np(a.value)

    def backward(g: np.ndarray) -> None:
        inner = (g * out_value).sum(axis=1, keepdims=True)
        _accumulate(a, out_value * (g - inner), fresh=True)

    return Tensor._op(out_value, (a,), backward)


def cross_entropy(logits: Tensor, targets: Sequence[int]) -> Tensor:
    """Mean over rows of -log softmax(logits)[row, target].

    The gradient w.r.t. the logits is (softmax - one_hot) / rows.
    """
    n, v = logits.shape
    if len(targets) != n:
        raise ShapeError(f"cross_entropy: {n} rows but {len(targets)} targets")
    idx = np.asarray(targets, dtype=np.int64)
    if idx.size and (idx.min() < 0 or idx.max() >= v):
        bad = int(idx[(idx < 0) | (idx >= v)][0])
        raise IndexError(f"cross_entropy: target {bad} out of range for {v} classes")
    shifted = logits.value - logits.value.max(axis=1, keepdims=True)
    log_z = np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    log_probs = shifted - log_z
    loss = -log_probs[np.arange(n), idx].mean()
    probs = np.exp(log_probs)

    def backward(g: np.ndarray) -> None:
        grad = probs.copy()
        grad[np.arange(n), idx] -= 1.0
        _accumulate(logits, grad * (g[0, 0] / n), fresh=True)

    return Tensor._op(np.array([[loss]]), (logits,), backward)


def lookup_rows(table: Tensor, ids: Sequence[int]) -> Tensor:
    """Gather rows of `table` by id; gradient scatter-adds back."""
    idx = np.asarray(ids, dtype=np.int64)
    if idx.size and (idx.min() < 0 or idx.max() >= table.rows):
        bad = int(idx[(idx < 0) | (idx >= table.rows)][0])
        raise IndexError(f"lookup_rows: id {bad} out of range for table with {table.rows} rows")
    out_value = table.value[idx].copy() if idx.size else np.zeros((0, table.cols))

    def backward(g: np.ndarray) -> None:
        if table.requires_grad:
            table._ensure_grad()
            np.add.at(table.grad, idx, g)

    return Tensor._op(out_value, (table,), backward)


def transpose(a: Tensor) -> Tensor:
    out_value = a.value.T.copy()

    def backward(g: np.ndarray) -> None:
        _accumulate(a, g.T)

    return Tensor._op(out_value, (a,), backward)


def reshape(a: Tensor, rows: int, cols: int) -> Tensor:
    if rows * cols != a.value.size:
        raise ShapeError(f"reshape: cannot view {a.shape} as ({rows}, {cols})")
    out_value = a.value.reshape(rows, cols).copy()

    def backward(g: np.ndarray) -> None:
        _accumulate(a, g.reshape(a.shape))

    return Tensor._op(out_value, (a,), backward)


def concat_rows(parts: Iterable[Tensor]) -> Tensor:
    parts = tuple(parts)
    if not parts:
        raise ShapeError("concat_rows: need at least one tensor")
    cols = parts[0].cols
    for p in parts:
        if p.cols != cols:
            raise ShapeError(f"concat_rows: column counts differ ({p.cols} vs {cols})")
    out_value = np.concatenate([p.value for p in parts], axis=0)
    offsets = np.cumsum([0] + [p.rows for p in parts])

    def backward(g: np.ndarray) -> None:
        for p, lo, hi in zip(parts, offsets[:-1], offsets[1:]):
            _accumulate(p, g[lo:hi])

    return Tensor._op(out_value, parts, backward)


def concat_cols(parts: Iterable[Tensor]) -> Tensor:
    parts = tuple(parts)
    if not parts:
        raise ShapeError("concat_cols: need at least one tensor")
    rows = parts[0].rows
    for p in parts:
        if p.rows != rows:
            raise ShapeError(f"concat_cols: row counts differ ({p.rows} vs {rows})")
    out_value = np.concatenate([p.value for p in parts], axis=1)
    offsets = np.cumsum([0] + [p.cols for p in parts])

    def backward(g: np.ndarray) -> None:
        for p, lo, hi in zip(parts, offsets[:-1], offsets[1:]):
            _accumulate(p, g[:, lo:hi])

    return Tensor._op(out_value, parts, backward)


def slice_rows(a: Tensor, start: int, stop: int) -> Tensor:
    if not (0 <= start <= stop <= a.rows):
        raise ShapeError(f"slice_rows: [{start}:{stop}] out of range for {a.shape}")
    out_value = a.value[start:stop].copy()

    def backward(g: np.ndarray) -> None:
        if a.requires_grad:
            a._ensure_grad()
            a.grad[start:stop] += g

    return Tensor._op(out_value, (a,), backward)


def slice_cols(a: Tensor, start: int, stop: int) -> Tensor:
    if not (0 <= start <= stop <= a.cols):
        raise ShapeError(f"slice_cols: [{start}:{stop}] out of range for {a.shape}")
    out_value = a.value[:, start:stop].copy()

    def backward(g: np.ndarray) -> None:
        if a.requires_grad:
            a._ensure_grad()
            a.grad[:, start:stop] += g

    return Tensor._op(out_value, (a,), backward)


def row(a: Tensor, i: int) -> Tensor:
    return slice_rows(a, i, i + 1)


def sum_all(a: Tensor) -> Tensor:
    out_value = np.array([[a.value.sum()]])

    def backward(g: np.ndarray) -> None:
        _accumulate(a, np.full(a.shape, g[0, 0]), fresh=True)

    return Tensor._op(out_value, (a,), backward)


def mean_all(a: Tensor) -> Tensor:
    if a.value.size == 0:
        raise ShapeError("mean_all: empty tensor")
    return scale(sum_all(a), 1.0 / a.value.size)


def dropout(a: Tensor, p: float, rng) -> Tensor:
    """Inverted dropout with a mask drawn from the given SeededRng."""
    if not 0.0 <= p < 1.0:
        raise ShapeError(f"dropout: rate {p} outside [0, 1)")
    if p == 0.0:
        return a
    draws = rng.uniform_array(a.value.size).reshape(a.shape)
    mask = np.where(draws < p, 0.0, 1.0 / (1.0 - p))

    def backward(g: np.ndarray) -> None:
        _accumulate(a, g * mask, fresh=True)

    return Tensor._op(a.value * mask, (a,), backward)
