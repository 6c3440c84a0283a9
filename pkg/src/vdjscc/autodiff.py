"""Tape-based reverse-mode differentiation over float64 numpy arrays.

Every op builds a new :class:`Tensor` that remembers its parents and a
closure mapping the output gradient to one gradient per parent. Calling
:func:`backward` on a scalar walks the recorded graph once in reverse
topological order.
"""

from __future__ import annotations

import contextlib
from typing import Callable, Iterable, Sequence

import numpy as np
from scipy.special import erf

from .errors import DimensionError

__all__ = [
    "DimensionError",
    "Tensor",
    "add",
    "backward",
    "broadcast_to",
    "concat",
    "corrupt_gradients",
    "gather",
    "gelu",
    "layer_norm",
    "linear",
    "matmul",
    "mean",
    "mul",
    "no_grad",
    "reshape",
    "scatter_zeros",
    "sigmoid",
    "slice_axis",
    "softmax",
    "sqrt",
    "square",
    "sum_all",
    "tensor",
    "transpose_axes",
]

LN_EPS = 1e-5

_grad_enabled = True
# op name -> multiplicative factor applied to that op's parent gradients (test hook)
_corruption: dict[str, float] = {}


@contextlib.contextmanager
def no_grad():
    global _grad_enabled
    prev = _grad_enabled
    _grad_enabled = False
    try:
        yield
    finally:
        _grad_enabled = prev


@contextlib.contextmanager
def corrupt_gradients(op: str, factor: float = 1.01):
    """Scale the backward output of every ``op`` node; used to prove gradchecks can fail."""
    _corruption[op] = factor
    try:
        yield
    finally:
        _corruption.pop(op, None)


class Tensor:
    __slots__ = ("data", "requires_grad", "grad", "_parents", "_backward", "_op")
    __array_priority__ = 100

    def __init__(self, data, requires_grad: bool = False):
        arr = np.asarray(data, dtype=np.float64)
        self.data = arr
        self.requires_grad = requires_grad
        self.grad: np.ndarray | None = None
        self._parents: tuple[Tensor, ...] = ()
        self._backward: Callable | None = None
        self._op = "leaf"

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    def numpy(self) -> np.ndarray:
        return self.data

    def detach(self) -> Tensor:
        return Tensor(self.data)

    def item(self) -> float:
        return float(self.data)

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, op={self._op}, requires_grad={self.requires_grad})"

    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return add(self, mul(_as_tensor(other), -1.0))

    def __rsub__(self, other):
        return add(_as_tensor(other), mul(self, -1.0))

    def __neg__(self):
        return mul(self, -1.0)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        if isinstance(other, Tensor):
            return div(self, other)
        return mul(self, 1.0 / other)

    def __matmul__(self, other):
        return matmul(self, other)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def transpose(self, *axes):
        return transpose_axes(self, axes)


def tensor(data, requires_grad: bool = False) -> Tensor:
    return Tensor(data, requires_grad=requires_grad)


def _as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _make(data: np.ndarray, parents: Sequence[Tensor], backward_fn: Callable, op: str) -> Tensor:
    out = Tensor(data)
    if _grad_enabled and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = tuple(parents)
        out._backward = backward_fn
        out._op = op
    return out


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    if grad.shape == shape:
        return grad
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, n in enumerate(shape):
        if n == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


def _check_broadcast(a: np.ndarray, b: np.ndarray, op: str) -> None:
    try:
        np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise DimensionError(f"{op}: cannot combine shapes {a.shape} and {b.shape}") from None


# ---------------------------------------------------------------- elementwise


def add(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    _check_broadcast(a.data, b.data, "add")

    def bw(g):
        return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)

    return _make(a.data + b.data, (a, b), bw, "add")


def mul(a, b) -> Tensor:
    a = _as_tensor(a)
    if not isinstance(b, Tensor):
        c = float(b)

        def bw_scalar(g):
            return (g * c,)

        return _make(a.data * c, (a,), bw_scalar, "mul")
    _check_broadcast(a.data, b.data, "mul")

    def bw(g):
        return _unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)

    return _make(a.data * b.data, (a, b), bw, "mul")


def div(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    _check_broadcast(a.data, b.data, "div")
    out = a.data / b.data

    def bw(g):
        return _unbroadcast(g / b.data, a.shape), _unbroadcast(-g * out / b.data, b.shape)

    return _make(out, (a, b), bw, "div")


def square(x: Tensor) -> Tensor:
    def bw(g):
        return (2.0 * g * x.data,)

    return _make(x.data * x.data, (x,), bw, "square")


def sqrt(x: Tensor) -> Tensor:
    out = np.sqrt(x.data)

    def bw(g):
        return (g * 0.5 / out,)

    return _make(out, (x,), bw, "sqrt")


def gelu(x: Tensor) -> Tensor:
    """Exact (erf-based) GELU."""
    cdf = 0.5 * (1.0 + erf(x.data / np.sqrt(2.0)))
    pdf = np.exp(-0.5 * x.data**2) / np.sqrt(2.0 * np.pi)

    def bw(g):
        return (g * (cdf + x.data * pdf),)

    return _make(x.data * cdf, (x,), bw, "gelu")


def sigmoid(x: Tensor) -> Tensor:
    out = np.empty_like(x.data)
    pos = x.data >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x.data[pos]))
    ex = np.exp(x.data[~pos])
    out[~pos] = ex / (1.0 + ex)

    def bw(g):
        return (g * out * (1.0 - out),)

    return _make(out, (x,), bw, "sigmoid")


# ---------------------------------------------------------------- reductions


def sum_all(x: Tensor) -> Tensor:
    def bw(g):
        return (np.broadcast_to(g, x.shape).copy(),)

    return _make(np.asarray(x.data.sum()), (x,), bw, "sum")


def mean(x: Tensor, axis: int | tuple[int, ...] | None = None, keepdims: bool = False) -> Tensor:
    out = x.data.mean(axis=axis, keepdims=keepdims)
    count = x.data.size // max(out.size, 1)

    def bw(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, x.shape) / count,)

    return _make(np.asarray(out), (x,), bw, "mean")


# ---------------------------------------------------------------- linear algebra


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.ndim < 2 or b.ndim < 2 or a.shape[-1] != b.shape[-2]:
        raise DimensionError(f"matmul: incompatible shapes {a.shape} and {b.shape}")
    try:
        np.broadcast_shapes(a.shape[:-2], b.shape[:-2])
    except ValueError:
        raise DimensionError(f"matmul: batch dims of {a.shape} and {b.shape} do not broadcast") from None

    def bw(g):
        ga = g @ np.swapaxes(b.data, -1, -2)
        gb = np.swapaxes(a.data, -1, -2) @ g
        return _unbroadcast(ga, a.shape), _unbroadcast(gb, b.shape)

    return _make(a.data @ b.data, (a, b), bw, "matmul")


def linear(x: Tensor, weight: Tensor, bias: Tensor | None = None) -> Tensor:
    """Affine map over the last axis: ``x @ weight + bias`` with weight (in, out)."""
    if weight.ndim != 2 or x.shape[-1] != weight.shape[0]:
        raise DimensionError(f"linear: input {x.shape} does not match weight {weight.shape}")
    if bias is not None and bias.shape != (weight.shape[1],):
        raise DimensionError(f"linear: bias {bias.shape} does not match weight {weight.shape}")
    out = x.data @ weight.data
    if bias is not None:
        out = out + bias.data
    n_in, n_out = weight.shape

    def bw(g):
        g2 = g.reshape(-1, n_out)
        gx = g @ weight.data.T
        gw = x.data.reshape(-1, n_in).T @ g2
        if bias is None:
            return gx, gw
        return gx, gw, g2.sum(axis=0)

    parents = (x, weight) if bias is None else (x, weight, bias)
    return _make(out, parents, bw, "linear")


def softmax(x: Tensor, axis: int = -1) -> Tensor:
    if not -x.ndim <= axis < x.ndim:
        raise DimensionError(f"softmax: axis {axis} invalid for shape {x.shape}")
    shifted = x.data - x.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    out = e / e.sum(axis=axis, keepdims=True)

    def bw(g):
        return (out * (g - (g * out).sum(axis=axis, keepdims=True)),)

    return _make(out, (x,), bw, "softmax")


def layer_norm(x: Tensor, gain: Tensor, bias: Tensor, eps: float = LN_EPS) -> Tensor:
    k = x.shape[-1]
    if gain.shape != (k,) or bias.shape != (k,):
        raise DimensionError(f"layer_norm: gain {gain.shape}/bias {bias.shape} vs last dim {k}")
    mu = x.data.mean(axis=-1, keepdims=True)
    xc = x.data - mu
    inv = 1.0 / np.sqrt((xc * xc).mean(axis=-1, keepdims=True) + eps)
    xhat = xc * inv

    def bw(g):
        gh = g * gain.data
        gx = inv * (gh - gh.mean(axis=-1, keepdims=True) - xhat * (gh * xhat).mean(axis=-1, keepdims=True))
        lead = tuple(range(x.ndim - 1))
        return gx, (g * xhat).sum(axis=lead), g.sum(axis=lead)

    return _make(xhat * gain.data + bias.data, (x, gain, bias), bw, "layer_norm")


# ---------------------------------------------------------------- shape ops


def reshape(x: Tensor, shape: Sequence[int]) -> Tensor:
    try:
        out = x.data.reshape(shape)
    except ValueError:
        raise DimensionError(f"reshape: cannot view {x.shape} as {tuple(shape)}") from None

    def bw(g):
        return (g.reshape(x.shape),)

    return _make(out, (x,), bw, "reshape")


def transpose_axes(x: Tensor, axes: Sequence[int]) -> Tensor:
    axes = tuple(axes)
    if sorted(a % x.ndim for a in axes) != list(range(x.ndim)):
        raise DimensionError(f"transpose_axes: {axes} is not a permutation for shape {x.shape}")
    inverse = tuple(np.argsort([a % x.ndim for a in axes]))

    def bw(g):
        return (np.transpose(g, inverse),)

    return _make(np.transpose(x.data, axes), (x,), bw, "transpose")


def broadcast_to(x: Tensor, shape: Sequence[int]) -> Tensor:
    shape = tuple(shape)
    try:
        out = np.broadcast_to(x.data, shape)
    except ValueError:
        raise DimensionError(f"broadcast_to: cannot broadcast {x.shape} to {shape}") from None

    def bw(g):
        return (_unbroadcast(g, x.shape),)

    return _make(out, (x,), bw, "broadcast")


def concat(tensors: Sequence[Tensor], axis: int = -1) -> Tensor:
    tensors = [_as_tensor(t) for t in tensors]
    try:
        out = np.concatenate([t.data for t in tensors], axis=axis)
    except ValueError:
        raise DimensionError(f"concat: incompatible shapes {[t.shape for t in tensors]}") from None
    bounds = np.cumsum([t.shape[axis] for t in tensors])[:-1]

    def bw(g):
        return tuple(np.split(g, bounds, axis=axis))

    return _make(out, tensors, bw, "concat")


def slice_axis(x: Tensor, start: int, stop: int, axis: int = -1) -> Tensor:
    axis = axis % x.ndim
    index = [slice(None)] * x.ndim
    index[axis] = slice(start, stop)
    index = tuple(index)

    def bw(g):
        full = np.zeros_like(x.data)
        full[index] = g
        return (full,)

    return _make(x.data[index], (x,), bw, "slice")


def _take_index(x_shape: tuple[int, ...], indices: np.ndarray, axis: int) -> tuple:
    """Full fancy index equivalent to take_along_axis with trailing broadcast."""
    shape = list(x_shape)
    shape[axis] = indices.shape[axis]
    ndim = len(x_shape)
    idx = []
    for d, n in enumerate(x_shape):
        if d == axis:
            idx.append(np.broadcast_to(indices, shape))
        else:
            idx.append(np.broadcast_to(np.arange(n).reshape([-1 if i == d else 1 for i in range(ndim)]), shape))
    return tuple(idx)


def _expand_indices(x: np.ndarray, indices: np.ndarray, axis: int) -> np.ndarray:
    extra = x.ndim - indices.ndim
    if extra < 0:
        raise DimensionError(f"gather: indices {indices.shape} have more dims than data {x.shape}")
    return indices.reshape(indices.shape + (1,) * extra)


def gather(x: Tensor, indices, axis: int = 0) -> Tensor:
    """Pick entries along ``axis``.

    A 1-D ``indices`` is shared by every position; a higher-rank array selects
    per leading position (``take_along_axis`` semantics, trailing dims broadcast).
    """
    indices = np.asarray(indices, dtype=np.intp)
    axis = axis % x.ndim
    if indices.size and (indices.min() < -x.shape[axis] or indices.max() >= x.shape[axis]):
        raise DimensionError(f"gather: index out of range for axis of length {x.shape[axis]}")
    if indices.ndim == 1:
        out = np.take(x.data, indices, axis=axis)

        def bw(g):
            full = np.zeros_like(x.data)
            np.add.at(full, (slice(None),) * axis + (indices,), g)
            return (full,)

        return _make(out, (x,), bw, "gather")

    idx = _expand_indices(x.data, indices, axis)
    full_index = _take_index(x.shape, idx, axis)
    out = x.data[full_index]

    def bw_along(g):
        full = np.zeros_like(x.data)
        np.add.at(full, full_index, g)
        return (full,)

    return _make(out, (x,), bw_along, "gather")


def scatter_zeros(x: Tensor, indices, length: int, axis: int = 0) -> Tensor:
    """Place slices of ``x`` at ``indices`` of a zero array whose ``axis`` has ``length``."""
    indices = np.asarray(indices, dtype=np.intp)
    axis = axis % x.ndim
    n_idx = indices.shape[axis] if indices.ndim > 1 else indices.shape[0]
    if n_idx != x.shape[axis]:
        raise DimensionError(f"scatter_zeros: {indices.shape} indices for axis of length {x.shape[axis]}")
    if indices.size and (indices.min() < 0 or indices.max() >= length):
        raise DimensionError(f"scatter_zeros: index out of range for length {length}")
    shape = list(x.shape)
    shape[axis] = length
    out = np.zeros(shape)
    if indices.ndim == 1:
        index = (slice(None),) * axis + (indices,)
    else:
        index = _take_index(tuple(shape), _expand_indices(out, indices, axis), axis)
    out[index] = x.data

    def bw(g):
        return (g[index],)

    return _make(out, (x,), bw, "scatter_zeros")


# ---------------------------------------------------------------- backward


def _topo_order(root: Tensor) -> list[Tensor]:
    order: list[Tensor] = []
    seen: set[int] = set()
    stack = [(root, False)]
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
            if id(p) not in seen and p.requires_grad:
                stack.append((p, False))
    return order


def backward(loss: Tensor, wrt: Iterable[Tensor] | None = None) -> dict[Tensor, np.ndarray]:
    """Reverse pass from a scalar ``loss``.

    Returns a map from every ``requires_grad`` leaf reached (plus any tensor in
    ``wrt``, intermediate or leaf, zero-filled when unreachable) to its
    gradient, and stores the same arrays on ``.grad``. Gradients are
    recomputed from scratch on each call.
    """
    wrt = list(wrt or ())
    wanted = {id(t) for t in wrt}
    if loss.data.size != 1:
        raise ValueError(f"backward: loss must be scalar, got shape {loss.shape}")
    grads: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
    leaves: dict[Tensor, np.ndarray] = {}
    if loss.requires_grad:
        for node in reversed(_topo_order(loss)):
            g = grads.pop(id(node), None)
            if g is None:
                continue
            if id(node) in wanted:
                leaves[node] = g
            if node._backward is None:
                leaves[node] = g
                continue
            parent_grads = node._backward(g)
            factor = _corruption.get(node._op)
            for p, pg in zip(node._parents, parent_grads):
                if not p.requires_grad:
                    continue
                if factor is not None:
                    pg = pg * factor
                if id(p) in grads:
                    grads[id(p)] = grads[id(p)] + pg
                else:
                    grads[id(p)] = pg
    for t in wrt:
        if t not in leaves:
            leaves[t] = np.zeros_like(t.data)
    for t, g in leaves.items():
        t.grad = np.array(g, dtype=np.float64).reshape(t.shape)
    return {t: t.grad for t in leaves}
