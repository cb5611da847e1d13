"""Dense tensors with reverse-mode automatic differentiation.

Values are numpy arrays (float64 by default; float32 is a training-speed
option, gradient checks require float64). Every operation records its
parents and an adjoint closure; ``backward`` walks the recorded graph once
in reverse topological order and accumulates sum-of-paths gradients.
"""

from __future__ import annotations

import numpy as np

from .errors import ContractError, DimensionError

__all__ = [
    "Tensor",
    "as_tensor",
    "matmul",
    "conv2d",
    "leaky_relu",
    "tanh",
    "sigmoid",
    "softplus",
    "softsign",
    "abs_",
    "exp",
    "log",
    "sqrt",
    "square",
    "mean",
    "sum_",
    "avg_pool_global",
    "upsample2x",
    "stop_gradient",
    "reshape",
    "transpose2d",
    "backward",
]


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_adjoint")

    def __init__(self, data, requires_grad=False, dtype=None):
        self.data = np.asarray(data, dtype=dtype if dtype is not None else np.float64)
        self.requires_grad = bool(requires_grad)
        self.grad = None
        self._parents = ()
        self._adjoint = None

    @property
    def shape(self):
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    def item(self):
        return float(self.data)

    def zero_grad(self):
        self.grad = None

    def detach(self):
        return Tensor(self.data, requires_grad=False)

    def backward(self):
        backward(self)

    # operator sugar ------------------------------------------------------
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

    def __rtruediv__(self, other):
        return div(other, self)

    def __neg__(self):
        return mul(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"


def as_tensor(x, dtype=None):
    return x if isinstance(x, Tensor) else Tensor(x, dtype=dtype)


def _result(data, parents, adjoint):
    """Wrap an op result, keeping the graph only where gradients can flow."""
    out = Tensor(data)
    if any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = tuple(parents)
        out._adjoint = adjoint
    return out

def _accum(t, g):
    if t.grad is None:
        t.grad = np.array(g, dtype=t.data.dtype, copy=True)
    else:
        t.grad += g


def _unbroadcast(g, shape):
    """Reduce a broadcast gradient back to the original operand shape."""
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, d in enumerate(shape) if d == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g.reshape(shape)


def _check_broadcast(a_shape, b_shape):
    for da, db in zip(a_shape[::-1], b_shape[::-1]):
        if da != db and da != 1 and db != 1:
            raise DimensionError(f"shapes {a_shape} and {b_shape} do not broadcast")


# elementwise binary ------------------------------------------------------

def add(a, b):
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast(a.shape, b.shape)
    data = a.data + b.data

    def adjoint(g):
        if a.requires_grad:
            _accum(a, _unbroadcast(g, a.shape))
        if b.requires_grad:
            _accum(b, _unbroadcast(g, b.shape))

    return _result(data, (a, b), adjoint)


def sub(a, b):
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast(a.shape, b.shape)
    data = a.data - b.data

    def adjoint(g):
        if a.requires_grad:
            _accum(a, _unbroadcast(g, a.shape))
        if b.requires_grad:
            _accum(b, _unbroadcast(-g, b.shape))

    return _result(data, (a, b), adjoint)


def mul(a, b):
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast(a.shape, b.shape)
    data = a.data * b.data

    def adjoint(g):
        if a.requires_grad:
            _accum(a, _unbroadcast(g * b.data, a.shape))
        if b.requires_grad:
            _accum(b, _unbroadcast(g * a.data, b.shape))

    return _result(data, (a, b), adjoint)


def div(a, b):
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast(a.shape, b.shape)
    data = a.data / b.data

    def adjoint(g):
        if a.requires_grad:
            _accum(a, _unbroadcast(g / b.data, a.shape))
        if b.requires_grad:
            _accum(b, _unbroadcast(-g * a.data / (b.data * b.data), b.shape))

    return _result(data, (a, b), adjoint)


def matmul(a, b):
    a, b = as_tensor(a), as_tensor(b)
    if a.data.ndim != 2 or b.data.ndim != 2 or a.shape[1] != b.shape[0]:
        raise DimensionError(f"matmul shapes {a.shape} x {b.shape}")
    data = a.data @ b.data

    def adjoint(g):
        if a.requires_grad:
            _accum(a, g @ b.data.T)
        if b.requires_grad:
            _accum(b, a.data.T @ g)

    return _result(data, (a, b), adjoint)


# elementwise unary -------------------------------------------------------

def _unary(x, data, dlocal):
    x = as_tensor(x)

    def adjoint(g):
        if x.requires_grad:
            _accum(x, g * dlocal)

    return _result(data, (x,), adjoint)


def leaky_relu(x, slope=0.2):
    x = as_tensor(x)
    pos = x.data > 0
    data = np.where(pos, x.data, slope * x.data)
    return _unary(x, data, np.where(pos, 1.0, slope))


def tanh(x):
    x = as_tensor(x)
    t = np.tanh(x.data)
    return _unary(x, t, 1.0 - t * t)


def sigmoid(x):
    x = as_tensor(x)
    s = _sigmoid_np(x.data)
    return _unary(x, s, s * (1.0 - s))


def _sigmoid_np(v):
    out = np.empty_like(v)
    pos = v >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-v[pos]))
    ev = np.exp(v[~pos])
    out[~pos] = ev / (1.0 + ev)
    return out


def softplus(x):
    """log(1 + exp(x)) in overflow-safe form; adjoint is sigmoid(x)."""
    x = as_tensor(x)
    data = np.maximum(x.data, 0.0) + np.log1p(np.exp(-np.abs(x.data)))
    return _unary(x, data, _sigmoid_np(x.data))


def softsign(x, gamma):
    """Smoothed sign a/(|a|+gamma); gradient gamma/(|a|+gamma)^2."""
    from .errors import ConfigError

    if gamma <= 0:
        raise ConfigError(f"softsign gamma must be > 0, got {gamma}")
    x = as_tensor(x)
    denom = np.abs(x.data) + gamma
    return _unary(x, x.data / denom, gamma / (denom * denom))


def abs_(x):
    x = as_tensor(x)
    # subgradient 0 at exact zeros
    return _unary(x, np.abs(x.data), np.sign(x.data))


def exp(x):
    x = as_tensor(x)
    e = np.exp(x.data)
    return _unary(x, e, e)


def log(x):
    x = as_tensor(x)
    return _unary(x, np.log(x.data), 1.0 / x.data)


def sqrt(x):
    x = as_tensor(x)
    r = np.sqrt(x.data)
    return _unary(x, r, 0.5 / r)


def square(x):
    x = as_tensor(x)
    return _unary(x, x.data * x.data, 2.0 * x.data)


# reductions and shape ----------------------------------------------------

def sum_(x, axis=None, keepdims=False):
    x = as_tensor(x)
    data = x.data.sum(axis=axis, keepdims=keepdims)

    def adjoint(g):
        if not x.requires_grad:
            return
        if axis is None:
            _accum(x, np.broadcast_to(g, x.shape))
        else:
            ge = g if keepdims else np.expand_dims(g, axis)
            _accum(x, np.broadcast_to(ge, x.shape))

    return _result(data, (x,), adjoint)


def mean(x, axis=None, keepdims=False):
    x = as_tensor(x)
    if axis is None:
        n = x.data.size
    else:
        axes = axis if isinstance(axis, tuple) else (axis,)
        n = int(np.prod([x.shape[a] for a in axes]))
    return mul(sum_(x, axis=axis, keepdims=keepdims), 1.0 / n)


def reshape(x, shape):
    x = as_tensor(x)
    old = x.shape
    data = x.data.reshape(shape)

    def adjoint(g):
        if x.requires_grad:
            _accum(x, g.reshape(old))

    return _result(data, (x,), adjoint)


def transpose2d(x):
    x = as_tensor(x)
    if x.data.ndim != 2:
        raise DimensionError(f"transpose2d needs a matrix, got {x.shape}")

    def adjoint(g):
        if x.requires_grad:
            _accum(x, g.T)

    return _result(x.data.T, (x,), adjoint)


def stop_gradient(x):
    """Identity in value; contributes zero gradient upstream."""
    x = as_tensor(x)
    return Tensor(x.data.copy())


def concat0(tensors):
    """Concatenate along axis 0."""
    tensors = [as_tensor(t) for t in tensors]
    if len({t.data.shape[1:] for t in tensors}) != 1:
        raise DimensionError("concat0: trailing shapes differ")
    data = np.concatenate([t.data for t in tensors], axis=0)
    sizes = [t.shape[0] for t in tensors]

    def adjoint(g):
        off = 0
        for t, sz in zip(tensors, sizes):
            if t.requires_grad:
                _accum(t, g[off : off + sz])
            off += sz

    return _result(data, tuple(tensors), adjoint)


# spatial ops -------------------------------------------------------------

def conv2d(x, w, stride=1, pad=0):
    """Cross-correlation of NCHW input with FCkk kernels."""
    x, w = as_tensor(x), as_tensor(w)
    if x.data.ndim != 4 or w.data.ndim != 4:
        raise DimensionError("conv2d expects 4-d input and kernel")
    n, c, h, wd = x.shape
    f, cw, kh, kw = w.shape
    if cw != c:
        raise DimensionError(f"conv2d channels: input {c}, kernel {cw}")
    if stride < 1:
        raise DimensionError(f"conv2d stride must be >= 1, got {stride}")
    if (h + 2 * pad - kh) % stride or (wd + 2 * pad - kw) % stride:
        raise DimensionError(
            f"conv2d output size not integral for input {h}x{wd}, "
            f"kernel {kh}x{kw}, stride {stride}, pad {pad}"
        )
    ho = (h + 2 * pad - kh) // stride + 1
    wo = (wd + 2 * pad - kw) // stride + 1
    if ho < 1 or wo < 1:
        raise DimensionError("conv2d kernel does not fit padded input")

    xp = np.pad(x.data, ((0, 0), (0, 0), (pad, pad), (pad, pad))) if pad else x.data
    win = np.lib.stride_tricks.sliding_window_view(xp, (kh, kw), axis=(2, 3))
    win = win[:, :, ::stride, ::stride]  # N,C,Ho,Wo,kh,kw
    cols = np.ascontiguousarray(win.transpose(0, 2, 3, 1, 4, 5)).reshape(
        n * ho * wo, c * kh * kw
    )
    wmat = w.data.reshape(f, c * kh * kw)
    out = (cols @ wmat.T).reshape(n, ho, wo, f).transpose(0, 3, 1, 2)

    def adjoint(g):
        gmat = np.ascontiguousarray(g.transpose(0, 2, 3, 1)).reshape(n * ho * wo, f)
        if w.requires_grad:
            _accum(w, (gmat.T @ cols).reshape(w.shape))
        if x.requires_grad:
            dcols = (gmat @ wmat).reshape(n, ho, wo, c, kh, kw)
            dxp = np.zeros((n, c, h + 2 * pad, wd + 2 * pad), dtype=x.data.dtype)
            for i in range(kh):
                for j in range(kw):
                    dxp[:, :, i : i + stride * ho : stride, j : j + stride * wo : stride] += (
                        dcols[:, :, :, :, i, j].transpose(0, 3, 1, 2)
                    )
            dx = dxp[:, :, pad : pad + h, pad : pad + wd] if pad else dxp
            _accum(x, dx)

    return _result(out, (x, w), adjoint)


def avg_pool_global(x):
    """Spatial mean per channel: NCHW -> NC."""
    x = as_tensor(x)
    if x.data.ndim != 4:
        raise DimensionError(f"avg_pool_global expects NCHW, got {x.shape}")
    n, c, h, w = x.shape
    data = x.data.mean(axis=(2, 3))

    def adjoint(g):
        if x.requires_grad:
            _accum(x, np.broadcast_to(g[:, :, None, None] / (h * w), x.shape))

    return _result(data, (x,), adjoint)


def upsample2x(x):
    """Nearest-neighbor 2x upsampling of NCHW; adjoint sums 2x2 blocks."""
    x = as_tensor(x)
    if x.data.ndim != 4:
        raise DimensionError(f"upsample2x expects NCHW, got {x.shape}")
    n, c, h, w = x.shape
    data = x.data.repeat(2, axis=2).repeat(2, axis=3)

    def adjoint(g):
        if x.requires_grad:
            _accum(x, g.reshape(n, c, h, 2, w, 2).sum(axis=(3, 5)))

    return _result(data, (x,), adjoint)


# backward pass -----------------------------------------------------------

def backward(loss):
    """Populate .grad for every requires_grad ancestor of a scalar loss."""
    if not isinstance(loss, Tensor):
        raise ContractError("backward expects a Tensor")
    if loss.data.size != 1:
        raise ContractError(f"backward expects a scalar loss, got shape {loss.shape}")
    if not loss.requires_grad:
        raise ContractError("loss is not connected to any requires_grad tensor")

    order = []
    seen = set()
    stack = [(loss, False)]
    while stack:
        node, done = stack.pop()
        if done:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if p.requires_grad and id(p) not in seen:
                stack.append((p, False))

    loss.grad = np.ones_like(loss.data)
    for node in reversed(order):
        if node._adjoint is not None and node.grad is not None:
            node._adjoint(node.grad)
