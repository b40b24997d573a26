"""Reverse-mode automatic differentiation over numpy arrays.

Only the operations the summarization model needs are implemented. A graph is
recorded dynamically as operations run; :func:`backward` walks it once in
reverse topological order.
"""
from __future__ import annotations

import contextlib
import math

import numpy as np

_DEFAULT_DTYPE = np.dtype(np.float32)


def default_dtype() -> np.dtype:
    return _DEFAULT_DTYPE


@contextlib.contextmanager
def precision(dtype):
    """Temporarily change the dtype new tensors are created with."""
    global _DEFAULT_DTYPE
    old = _DEFAULT_DTYPE
    _DEFAULT_DTYPE = np.dtype(dtype)
    try:
        yield
    finally:
        _DEFAULT_DTYPE = old


class GraphError(RuntimeError):
    """Raised on misuse of the recorded graph (non-scalar loss, reuse, ...)."""


class Tensor:
    """An array with an optional gradient accumulator and a graph link."""

    __slots__ = ("data", "requires_grad", "grad", "_parents", "_backward", "_consumed")

    def __init__(self, data, requires_grad=False, dtype=None):
        if isinstance(data, Tensor):
            data = data.data
        self.data = np.array(data, dtype=dtype or _DEFAULT_DTYPE)
        self.requires_grad = bool(requires_grad)
        self.grad = None
        self._parents = ()
        self._backward = None
        self._consumed = False
        _check_finite(self.data, "Tensor")

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def T(self):
        return transpose(self)

    def numpy(self):
        return self.data

    def item(self):
        return self.data.item()

    def detach(self):
        return Tensor(self.data, dtype=self.data.dtype)

    def zero_grad(self):
        self.grad = None

    def __repr__(self):
        return f"Tensor(shape={self.shape}, dtype={self.dtype}, requires_grad={self.requires_grad})"

    def __len__(self):
        return len(self.data)

    # arithmetic sugar
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        return div(self, other)

    def __neg__(self):
        return mul(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def __rmatmul__(self, other):
        return matmul(other, self)

    def __getitem__(self, index):
        return getitem(self, index)

    def sum(self, axis=None, keepdims=False):
        return tsum(self, axis, keepdims)

    def mean(self, axis=None, keepdims=False):
        return mean(self, axis, keepdims)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)


def _check_finite(arr, where):
    if arr.dtype.kind in "fc" and not np.isfinite(arr).all():
        raise FloatingPointError(f"non-finite values produced by {where}")


def as_tensor(x, dtype=None) -> Tensor:
    if isinstance(x, Tensor):
        return x
    return Tensor(x, dtype=dtype)


def _lift(x, like: Tensor) -> Tensor:
    if isinstance(x, Tensor):
        return x
    return Tensor(np.asarray(x, dtype=like.dtype), dtype=like.dtype)


def _node(data, parents, backward_fn, where):
    data = np.asarray(data)
    _check_finite(data, where)
    out = Tensor.__new__(Tensor)
    out.data = data
    out.grad = None
    out._consumed = False
    out.requires_grad = any(p.requires_grad for p in parents)
    if out.requires_grad:
        out._parents = tuple(parents)
        out._backward = backward_fn
    else:
        out._parents = ()
        out._backward = None
    return out


def _unbroadcast(grad, shape):
    if grad.shape == shape:
        return grad
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for i, n in enumerate(shape):
        if n == 1 and grad.shape[i] != 1:
            grad = grad.sum(axis=i, keepdims=True)
    return grad


# ---------------------------------------------------------------------------
# graph traversal


def backward(loss: Tensor) -> None:
    """Accumulate d(loss)/d(leaf) into ``.grad`` of every tracked leaf."""
    if loss.data.size != 1:
        raise GraphError(f"backward needs a scalar loss, got shape {loss.shape}")
    if not loss.requires_grad:
        raise GraphError("loss is detached from every tracked parameter")
    if loss._consumed:
        raise GraphError("backward already ran on this graph; recompute the forward pass")

    order = []
    seen = set()
    stack = [(loss, False)]
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

    grads = {id(loss): np.ones_like(loss.data)}
    for node in reversed(order):
        g = grads.pop(id(node), None)
        if g is None:
            continue
        if node._backward is None:
            node.grad = g.copy() if node.grad is None else node.grad + g
            continue
        parent_grads = node._backward(g)
        for p, pg in zip(node._parents, parent_grads):
            if pg is None or not p.requires_grad:
                continue
            pg = np.asarray(pg, dtype=p.dtype)
            if id(p) in grads:
                grads[id(p)] = grads[id(p)] + pg
            else:
                grads[id(p)] = pg
    loss._consumed = True


# ---------------------------------------------------------------------------
# elementary ops


def add(a, b) -> Tensor:
    a = a if isinstance(a, Tensor) else _lift(a, b)
    b = _lift(b, a)

    def bw(g):
        return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)

    return _node(a.data + b.data, (a, b), bw, "add")


def sub(a, b) -> Tensor:
    a = a if isinstance(a, Tensor) else _lift(a, b)
    b = _lift(b, a)

    def bw(g):
        return _unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)

    return _node(a.data - b.data, (a, b), bw, "sub")


def mul(a, b) -> Tensor:
    a = a if isinstance(a, Tensor) else _lift(a, b)
    b = _lift(b, a)

    def bw(g):
        return _unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)

    return _node(a.data * b.data, (a, b), bw, "mul")


def div(a, b) -> Tensor:
    a = a if isinstance(a, Tensor) else _lift(a, b)
    b = _lift(b, a)

    def bw(g):
        ga = _unbroadcast(g / b.data, a.shape)
        gb = _unbroadcast(-g * a.data / (b.data * b.data), b.shape)
        return ga, gb

    return _node(a.data / b.data, (a, b), bw, "div")


def matmul(a, b) -> Tensor:
    a = a if isinstance(a, Tensor) else _lift(a, b)
    b = _lift(b, a)

    def bw(g):
        if a.ndim == 1 or b.ndim == 1:
            ga = np.outer(g, b.data) if a.ndim == 2 else g @ b.data.T
            gb = np.outer(a.data, g) if b.ndim == 2 else a.data.T @ g
            return ga, gb
        ga = g @ np.swapaxes(b.data, -1, -2)
        gb = np.swapaxes(a.data, -1, -2) @ g
        return _unbroadcast(ga, a.shape), _unbroadcast(gb, b.shape)

    return _node(a.data @ b.data, (a, b), bw, "matmul")


def tsum(x: Tensor, axis=None, keepdims=False) -> Tensor:
    def bw(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, x.shape).copy(),)

    return _node(x.data.sum(axis=axis, keepdims=keepdims), (x,), bw, "sum")


def mean(x: Tensor, axis=None, keepdims=False) -> Tensor:
    count = x.data.size if axis is None else np.prod([x.shape[a] for a in np.atleast_1d(axis)])
    return tsum(x, axis, keepdims) * (1.0 / float(count))


def tmax(x: Tensor) -> Tensor:
    """Global maximum; the gradient flows to the first arg-max entry."""
    flat = int(np.argmax(x.data))

    def bw(g):
        out = np.zeros_like(x.data)
        out.flat[flat] = g
        return (out,)

    return _node(x.data.flat[flat], (x,), bw, "max")


def tabs(x: Tensor) -> Tensor:
    def bw(g):
        return (g * np.sign(x.data),)

    return _node(np.abs(x.data), (x,), bw, "abs")


def exp(x: Tensor) -> Tensor:
    with np.errstate(over="ignore"):  # overflow is reported by _node
        out = np.exp(x.data)

    def bw(g):
        return (g * out,)

    return _node(out, (x,), bw, "exp")


def log(x: Tensor) -> Tensor:
    def bw(g):
        return (g / x.data,)

    with np.errstate(divide="ignore", invalid="ignore"):  # reported by _node
        out = np.log(x.data)
    return _node(out, (x,), bw, "log")


def reshape(x: Tensor, shape) -> Tensor:
    def bw(g):
        return (g.reshape(x.shape),)

    return _node(x.data.reshape(shape), (x,), bw, "reshape")


def transpose(x: Tensor, axes=None) -> Tensor:
    inv = None if axes is None else np.argsort(axes)

    def bw(g):
        return (np.transpose(g, inv),)

    return _node(np.transpose(x.data, axes), (x,), bw, "transpose")


def getitem(x: Tensor, index) -> Tensor:
    def bw(g):
        out = np.zeros_like(x.data)
        np.add.at(out, index, g)
        return (out,)

    return _node(x.data[index], (x,), bw, "getitem")


def take_rows(x: Tensor, index) -> Tensor:
    """``x[index]`` along axis 0 for an integer index array of any shape."""
    index = np.asarray(index, dtype=np.intp)

    def bw(g):
        out = np.zeros_like(x.data)
        np.add.at(out, index.reshape(-1), g.reshape((-1,) + x.shape[1:]))
        return (out,)

    return _node(x.data[index], (x,), bw, "take_rows")


def concat(tensors, axis=0) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    sizes = np.cumsum([t.shape[axis] for t in tensors])[:-1]

    def bw(g):
        return tuple(np.split(g, sizes, axis=axis))

    return _node(np.concatenate([t.data for t in tensors], axis=axis), tensors, bw, "concat")


def stack(tensors, axis=0) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]

    def bw(g):
        return tuple(np.moveaxis(g, axis, 0))

    return _node(np.stack([t.data for t in tensors], axis=axis), tensors, bw, "stack")


# ---------------------------------------------------------------------------
# activations and normalizations

_GELU_C = math.sqrt(2.0 / math.pi)


def relu(x: Tensor) -> Tensor:
    mask = x.data > 0

    def bw(g):
        return (g * mask,)

    return _node(np.where(mask, x.data, 0).astype(x.dtype), (x,), bw, "relu")


def gelu(x: Tensor) -> Tensor:
    """GELU, tanh approximation."""
    v = x.data
    inner = _GELU_C * (v + 0.044715 * v**3)
    t = np.tanh(inner)

    def bw(g):
        d = 0.5 * (1 + t) + 0.5 * v * (1 - t * t) * _GELU_C * (1 + 3 * 0.044715 * v * v)
        return (g * d,)

    return _node(0.5 * v * (1 + t), (x,), bw, "gelu")


def _stable_sigmoid(v):
    out = np.empty_like(v)
    pos = v >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-v[pos]))
    e = np.exp(v[~pos])
    out[~pos] = e / (1.0 + e)
    return out


def sigmoid(x: Tensor) -> Tensor:
    s = _stable_sigmoid(x.data)

    def bw(g):
        return (g * s * (1 - s),)

    return _node(s, (x,), bw, "sigmoid")


def softplus(x: Tensor) -> Tensor:
    v = x.data

    def bw(g):
        return (g * _stable_sigmoid(v),)

    return _node(np.logaddexp(0, v).astype(x.dtype), (x,), bw, "softplus")


def elementwise(x, kind: str) -> Tensor:
    fns = {"relu": relu, "gelu": gelu, "sigmoid": sigmoid}
    try:
        fn = fns[kind]
    except KeyError:
        raise ValueError(f"unknown elementwise kind {kind!r}") from None
    return fn(as_tensor(x))


def softmax_rows(x) -> Tensor:
    """Softmax over the last axis with row-max subtraction."""
    x = as_tensor(x)
    z = x.data - x.data.max(axis=-1, keepdims=True)
    e = np.exp(z)
    y = e / e.sum(axis=-1, keepdims=True)

    def bw(g):
        return (y * (g - (g * y).sum(axis=-1, keepdims=True)),)

    return _node(y, (x,), bw, "softmax_rows")


def layer_norm(x, gain, bias, eps=1e-5) -> Tensor:
    """Normalize each row (last axis) to zero mean and unit variance, then scale and shift."""
    x = as_tensor(x)
    gain = _lift(gain, x)
    bias = _lift(bias, x)
    if x.shape[-1] < 1:
        raise ValueError("layer_norm needs a non-empty feature axis")
    mu = x.data.mean(axis=-1, keepdims=True)
    xc = x.data - mu
    var = (xc * xc).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = xc * inv

    def bw(g):
        gh = g * gain.data
        gx = inv * (gh - gh.mean(axis=-1, keepdims=True) - xhat * (gh * xhat).mean(axis=-1, keepdims=True))
        lead = tuple(range(g.ndim - 1))
        return gx, (g * xhat).sum(axis=lead), g.sum(axis=lead)

    return _node(xhat * gain.data + bias.data, (x, gain, bias), bw, "layer_norm")


def dropout(x: Tensor, rate: float, rng: np.random.Generator | None, training: bool) -> Tensor:
    """Inverted dropout; identity outside training."""
    if not training or rate <= 0:
        return x
    keep = 1.0 - rate
    mask = (rng.random(x.shape) < keep).astype(x.dtype) / x.dtype.type(keep)
    return mul(x, Tensor(mask, dtype=x.dtype))


def smooth_l1(x: Tensor, delta: float = 1.0) -> Tensor:
    """Elementwise Huber-style smooth L1."""
    v = x.data
    a = np.abs(v)
    small = a < delta
    out = np.where(small, 0.5 * v * v / delta, a - 0.5 * delta).astype(x.dtype)

    def bw(g):
        return (g * np.where(small, v / delta, np.sign(v)),)

    return _node(out, (x,), bw, "smooth_l1")
