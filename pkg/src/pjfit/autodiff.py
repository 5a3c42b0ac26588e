"""Dense tensors with reverse-mode automatic differentiation.

A small numpy-backed engine: every operation that touches a tensor
requiring gradients records a backward rule on a dynamic graph. The graph
lives for exactly one forward pass and is consumed by :func:`backward`.
Training runs in float32; float64 is available for gradient checking.
"""

from __future__ import annotations

import contextlib
import threading
from typing import Callable, Sequence

import numpy as np

DEFAULT_DTYPE = np.float32


class DimensionError(ValueError):
    """Operand shapes are incompatible for the requested operation."""


class EmptyAttentionError(ValueError):
    """Masked softmax received a row with no unmasked positions."""


class GraphStateError(RuntimeError):
    """Backward was invoked on a graph that has already been consumed."""


class _GradMode(threading.local):
    enabled = True


_grad_mode = _GradMode()


@contextlib.contextmanager
def no_grad():
    """Disable graph recording inside the block (pure inference)."""
    prev = _grad_mode.enabled
    _grad_mode.enabled = False
    try:
        yield
    finally:
        _grad_mode.enabled = prev


class _Node:
    """One recorded operation: its inputs and the rule that maps the
    output gradient onto input gradients."""

    __slots__ = ("inputs", "backward_fn")

    def __init__(self, inputs: tuple["Tensor", ...], backward_fn: Callable):
        self.inputs = inputs
        self.backward_fn = backward_fn


class Tensor:
    """A dense row-major array plus an optional gradient buffer.

    Leaf tensors are created directly; non-leaf tensors come out of the
    operations below and carry a node linking them into the graph.
    """

    __slots__ = ("data", "requires_grad", "grad", "_node")

    # Make numpy defer to the reflected operators below instead of trying
    # to absorb a Tensor into an ndarray expression.
    __array_ufunc__ = None

    def __init__(self, data, requires_grad: bool = False, dtype=None):
        if isinstance(data, Tensor):
            raise TypeError("Tensor wraps raw array data, not another Tensor")
        if dtype is None:
            arr = np.asarray(data)
            if arr.dtype not in (np.float32, np.float64):
                arr = arr.astype(DEFAULT_DTYPE)
        else:
            arr = np.asarray(data, dtype=dtype)
        self.data = np.ascontiguousarray(arr)
        self.requires_grad = bool(requires_grad)
        self.grad: np.ndarray | None = None
        self._node: _Node | None = None

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    @property
    def dtype(self):
        return self.data.dtype

    def zero_grad(self) -> None:
        self.grad = None

    def item(self) -> float:
        return float(self.data.reshape(-1)[0])

    def __repr__(self) -> str:
        tag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}, dtype={self.data.dtype}{tag})"

    # operator sugar -----------------------------------------------------
    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(other, self)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(other, self)

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)


def _as_tensor(x, like: Tensor | None = None) -> Tensor:
    if isinstance(x, Tensor):
        return x
    dtype = like.dtype if like is not None else None
    return Tensor(np.asarray(x, dtype=dtype))


def _from_op(data: np.ndarray, inputs: tuple[Tensor, ...], backward_fn) -> Tensor:
    out = Tensor.__new__(Tensor)
    out.data = data
    out.grad = None
    record = _grad_mode.enabled and any(
        t.requires_grad or t._node is not None for t in inputs
    )
    out.requires_grad = record
    out._node = _Node(inputs, backward_fn) if record else None
    return out


def _accumulate(t: Tensor, g: np.ndarray, own: bool = False) -> None:
    """Add a gradient contribution to ``t``.

    ``own`` marks ``g`` as freshly allocated and exclusively ours, letting
    the first contribution be stored without a defensive copy.
    """
    if not (t.requires_grad or t._node is not None):
        return
    if t.grad is None:
        t.grad = g if own else np.array(g, dtype=t.data.dtype, copy=True)
    else:
        t.grad += g


def _accumulate_region(t: Tensor, sel, g: np.ndarray) -> None:
    """Add a gradient contribution covering only ``t.data[sel]``."""
    if not (t.requires_grad or t._node is not None):
        return
    if t.grad is None:
        t.grad = np.zeros_like(t.data)
    t.grad[sel] += g


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum a gradient over broadcast dimensions back down to ``shape``."""
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, extent in enumerate(shape):
        if extent == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g


def backward(loss: Tensor) -> None:
    """Populate gradients of every reachable leaf with dLoss/dLeaf.

    The loss must be a scalar. The graph is consumed: a second backward
    through any of its nodes raises :class:`GraphStateError` until a new
    forward pass rebuilds it.
    """
    if not isinstance(loss, Tensor):
        raise TypeError("backward expects a Tensor loss")
    if loss.size != 1:
        raise DimensionError(
            f"backward needs a scalar loss, got shape {loss.shape}"
        )

    # Deterministic depth-first topological order over the node graph.
    topo: list[Tensor] = []
    visited: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(loss, False)]
    while stack:
        t, expanded = stack.pop()
        if t._node is None:
            continue
        if expanded:
            topo.append(t)
            continue
        if id(t) in visited:
            continue
        visited.add(id(t))
        stack.append((t, True))
        for inp in reversed(t._node.inputs):
            stack.append((inp, False))

    for t in topo:
        if t._node.backward_fn is None:
            raise GraphStateError(
                "graph already consumed by a previous backward; "
                "rebuild the forward pass before differentiating again"
            )

    loss.grad = np.ones_like(loss.data)
    for t in reversed(topo):
        node = t._node
        fn = node.backward_fn
        node.backward_fn = None
        if t.grad is not None:
            fn(t.grad)


# ---------------------------------------------------------------------------
# elementwise operations
# ---------------------------------------------------------------------------


def _coerce_pair(a, b) -> tuple[Tensor, Tensor]:
    if not isinstance(a, Tensor):
        a = _as_tensor(a, like=b if isinstance(b, Tensor) else None)
    if not isinstance(b, Tensor):
        b = _as_tensor(b, like=a)
    return a, b


def _broadcast_error(a: Tensor, b: Tensor, exc: ValueError) -> DimensionError:
    return DimensionError(
        f"operand shapes {a.shape} and {b.shape} do not broadcast"
    )


def add(a, b) -> Tensor:
    a, b = _coerce_pair(a, b)
    try:
        data = np.add(a.data, b.data)
    except ValueError as exc:
        raise _broadcast_error(a, b, exc) from exc

    def backward_fn(g):
        ga = _unbroadcast(g, a.shape)
        _accumulate(a, ga, own=ga is not g)
        gb = _unbroadcast(g, b.shape)
        _accumulate(b, gb, own=gb is not g)

    return _from_op(data, (a, b), backward_fn)


def sub(a, b) -> Tensor:
    a, b = _coerce_pair(a, b)
    try:
        data = np.subtract(a.data, b.data)
    except ValueError as exc:
        raise _broadcast_error(a, b, exc) from exc

    def backward_fn(g):
        ga = _unbroadcast(g, a.shape)
        _accumulate(a, ga, own=ga is not g)
        _accumulate(b, _unbroadcast(-g, b.shape), own=True)

    return _from_op(data, (a, b), backward_fn)


def mul(a, b) -> Tensor:
    a, b = _coerce_pair(a, b)
    try:
        data = np.multiply(a.data, b.data)
    except ValueError as exc:
        raise _broadcast_error(a, b, exc) from exc

    def backward_fn(g):
        _accumulate(a, _unbroadcast(g * b.data, a.shape), own=True)
        _accumulate(b, _unbroadcast(g * a.data, b.shape), own=True)

    return _from_op(data, (a, b), backward_fn)


def neg(x: Tensor) -> Tensor:
    x = _as_tensor(x)

    def backward_fn(g):
        _accumulate(x, -g, own=True)

    return _from_op(-x.data, (x,), backward_fn)


def tanh(x) -> Tensor:
    x = _as_tensor(x)
    y = np.tanh(x.data)

    def backward_fn(g):
        _accumulate(x, g * (1.0 - y * y), own=True)

    return _from_op(y, (x,), backward_fn)


def sigmoid(x) -> Tensor:
    x = _as_tensor(x)
    # Exact identity sigma(x) = (tanh(x/2) + 1) / 2; notably faster than
    # exp-based forms and saturates cleanly at the extremes.
    y = 0.5 * (np.tanh(0.5 * x.data) + 1.0)

    def backward_fn(g):
        _accumulate(x, g * (y * (1.0 - y)), own=True)

    return _from_op(y, (x,), backward_fn)


def log(x) -> Tensor:
    x = _as_tensor(x)

    def backward_fn(g):
        _accumulate(x, g / x.data, own=True)

    return _from_op(np.log(x.data), (x,), backward_fn)


def clip(x: Tensor, lo: float, hi: float) -> Tensor:
    """Clamp values into [lo, hi]; gradient passes through unclipped entries."""
    x = _as_tensor(x)
    inside = (x.data >= lo) & (x.data <= hi)

    def backward_fn(g):
        _accumulate(x, g * inside, own=True)

    return _from_op(np.clip(x.data, lo, hi), (x,), backward_fn)


# ---------------------------------------------------------------------------
# linear algebra and structure
# ---------------------------------------------------------------------------


def matmul(a: Tensor, b: Tensor, transpose_b: bool = False) -> Tensor:
    """Matrix product ``a @ b`` (or ``a @ b.T`` with ``transpose_b``).

    Both operands need rank >= 2; leading batch dimensions broadcast.
    """
    a = _as_tensor(a)
    b = _as_tensor(b)
    if a.ndim < 2 or b.ndim < 2:
        raise DimensionError(
            f"matmul needs rank >= 2 operands, got shapes {a.shape} and {b.shape}"
        )
    inner_b = b.shape[-1] if transpose_b else b.shape[-2]
    if a.shape[-1] != inner_b:
        raise DimensionError(
            f"matmul inner dimensions disagree: {a.shape} vs {b.shape}"
            + (" (transposed)" if transpose_b else "")
        )
    b_eff = np.swapaxes(b.data, -1, -2) if transpose_b else b.data
    try:
        data = np.matmul(a.data, b_eff)
    except ValueError as exc:
        raise DimensionError(
            f"matmul batch dimensions do not broadcast: {a.shape} vs {b.shape}"
        ) from exc

    def backward_fn(g):
        if transpose_b:
            ga = np.matmul(g, b.data)
            gb = np.matmul(np.swapaxes(g, -1, -2), a.data)
        else:
            ga = np.matmul(g, np.swapaxes(b.data, -1, -2))
            gb = np.matmul(np.swapaxes(a.data, -1, -2), g)
        _accumulate(a, _unbroadcast(ga, a.shape), own=True)
        _accumulate(b, _unbroadcast(gb, b.shape), own=True)

    return _from_op(data, (a, b), backward_fn)


def concat(parts: Sequence[Tensor], axis: int = 0) -> Tensor:
    parts = [_as_tensor(p) for p in parts]
    if not parts:
        raise DimensionError("concat needs at least one tensor")
    try:
        data = np.concatenate([p.data for p in parts], axis=axis)
    except ValueError as exc:
        raise DimensionError(
            f"concat shapes incompatible along axis {axis}: "
            f"{[p.shape for p in parts]}"
        ) from exc
    sizes = [p.shape[axis] for p in parts]
    offsets = np.cumsum(sizes)[:-1]

    def backward_fn(g):
        for p, piece in zip(parts, np.split(g, offsets, axis=axis)):
            _accumulate(p, piece)

    return _from_op(data, tuple(parts), backward_fn)


def stack(parts: Sequence[Tensor], axis: int = 0) -> Tensor:
    parts = [_as_tensor(p) for p in parts]
    if not parts:
        raise DimensionError("stack needs at least one tensor")
    shapes = {p.shape for p in parts}
    if len(shapes) != 1:
        raise DimensionError(f"stack needs identical shapes, got {sorted(shapes)}")
    data = np.stack([p.data for p in parts], axis=axis)

    def backward_fn(g):
        for i, p in enumerate(parts):
            _accumulate(p, np.take(g, i, axis=axis), own=True)

    return _from_op(data, tuple(parts), backward_fn)


def reshape(x: Tensor, shape) -> Tensor:
    x = _as_tensor(x)
    try:
        data = x.data.reshape(shape)
    except ValueError as exc:
        raise DimensionError(f"cannot reshape {x.shape} to {shape}") from exc

    def backward_fn(g):
        _accumulate(x, g.reshape(x.shape))

    return _from_op(data, (x,), backward_fn)


def transpose(x: Tensor, axes=None) -> Tensor:
    x = _as_tensor(x)
    if axes is None:
        axes = tuple(reversed(range(x.ndim)))
    inverse = np.argsort(axes)

    def backward_fn(g):
        _accumulate(x, np.transpose(g, inverse))

    return _from_op(np.transpose(x.data, axes), (x,), backward_fn)


def index_axis(x: Tensor, axis: int, index: int) -> Tensor:
    """Select one slice along an axis, dropping that axis."""
    x = _as_tensor(x)
    data = np.take(x.data, index, axis=axis)
    sel = [slice(None)] * x.ndim
    sel[axis] = index
    sel = tuple(sel)

    def backward_fn(g):
        _accumulate_region(x, sel, g)

    return _from_op(data, (x,), backward_fn)


def slice_axis(x: Tensor, axis: int, start: int, stop: int) -> Tensor:
    x = _as_tensor(x)
    sel = [slice(None)] * x.ndim
    sel[axis] = slice(start, stop)
    sel = tuple(sel)

    def backward_fn(g):
        _accumulate_region(x, sel, g)

    return _from_op(x.data[sel], (x,), backward_fn)


def embedding_lookup(table: Tensor, ids: np.ndarray) -> Tensor:
    """Gather rows of ``table`` (shape [vocab, dim]) by integer id array."""
    ids = np.asarray(ids)
    if table.ndim != 2:
        raise DimensionError(f"embedding table must be rank 2, got {table.shape}")
    if ids.size and (ids.min() < 0 or ids.max() >= table.shape[0]):
        raise DimensionError(
            f"token id out of range for table with {table.shape[0]} rows"
        )
    data = table.data[ids]

    def backward_fn(g):
        if not (table.requires_grad or table._node is not None):
            return
        if table.grad is None:
            table.grad = np.zeros_like(table.data)
        np.add.at(table.grad, ids.reshape(-1), g.reshape(-1, table.shape[1]))

    return _from_op(data, (table,), backward_fn)


# ---------------------------------------------------------------------------
# reductions
# ---------------------------------------------------------------------------


def sum(x: Tensor, axis=None, keepdims: bool = False) -> Tensor:  # noqa: A001
    x = _as_tensor(x)
    data = np.sum(x.data, axis=axis, keepdims=keepdims)

    def backward_fn(g):
        if axis is None:
            _accumulate(x, np.broadcast_to(g, x.shape))
        else:
            ge = g if keepdims else np.expand_dims(g, axis)
            _accumulate(x, np.broadcast_to(ge, x.shape))

    return _from_op(data, (x,), backward_fn)


def mean(x: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    x = _as_tensor(x)
    data = np.mean(x.data, axis=axis, keepdims=keepdims)
    count = x.size if axis is None else x.shape[axis]

    def backward_fn(g):
        scaled = g / count
        if axis is None:
            _accumulate(x, np.broadcast_to(scaled, x.shape))
        else:
            ge = scaled if keepdims else np.expand_dims(scaled, axis)
            _accumulate(x, np.broadcast_to(ge, x.shape))

    return _from_op(data, (x,), backward_fn)


def weighted_sum(weights: Tensor, vectors: Tensor) -> Tensor:
    """Sum of vectors scaled by weights over the second-to-last axis.

    ``weights`` has shape [..., n] and ``vectors`` [..., n, d]; the result
    is [..., d]. Gradient flows into both operands.
    """
    weights = _as_tensor(weights)
    vectors = _as_tensor(vectors)
    if weights.shape[-1] != vectors.shape[-2]:
        raise DimensionError(
            f"weighted_sum needs weights [..., n] and vectors [..., n, d]; "
            f"got {weights.shape} and {vectors.shape}"
        )
    # Contract the sequence axis as a [..., 1, n] @ [..., n, d] product so
    # no broadcast temporary of the full outer shape is materialized.
    row = reshape(weights, weights.shape[:-1] + (1, weights.shape[-1]))
    out = matmul(row, vectors)
    return reshape(out, out.shape[:-2] + (out.shape[-1],))


# ---------------------------------------------------------------------------
# masked softmax
# ---------------------------------------------------------------------------


def softmax_masked(
    logits: Tensor,
    mask: np.ndarray,
    allow_empty_rows: bool = False,
) -> Tensor:
    """Softmax over the last axis restricted to unmasked positions.

    Masked positions get weight exactly 0; unmasked weights are positive
    and sum to 1. Uses max subtraction for overflow safety. A row with no
    unmasked position raises :class:`EmptyAttentionError` unless
    ``allow_empty_rows`` is set, in which case the row comes back all-zero
    (used internally for padded batch slots).
    """
    logits = _as_tensor(logits)
    mask = np.broadcast_to(np.asarray(mask, dtype=bool), logits.shape)
    counts = mask.sum(axis=-1)
    if not allow_empty_rows and not counts.all():
        raise EmptyAttentionError("softmax over a fully masked position set")

    neg_inf = np.array(-np.inf, dtype=logits.dtype)
    row_max = np.max(np.where(mask, logits.data, neg_inf), axis=-1, keepdims=True)
    row_max = np.where(np.isfinite(row_max), row_max, 0.0)
    shifted = np.where(mask, logits.data - row_max, -np.inf)
    exps = np.exp(shifted)
    denom = exps.sum(axis=-1, keepdims=True)
    out = exps / np.where(denom == 0.0, 1.0, denom)

    def backward_fn(g):
        inner = (g * out).sum(axis=-1, keepdims=True)
        _accumulate(logits, out * (g - inner), own=True)

    return _from_op(out, (logits,), backward_fn)
