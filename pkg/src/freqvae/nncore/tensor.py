"""Dense-array reverse-mode automatic differentiation.

A :class:`Tensor` wraps a numpy array plus the closure that pushes its
gradient to its parents. ``backward`` walks the graph once in reverse
topological order.
"""

import numpy as np

from ..errors import DimensionError

DEFAULT_DTYPE = np.float32


class Tensor:
    __slots__ = ("value", "grad", "parents", "_backward", "op", "requires_grad", "name")

    def __init__(self, value, parents=(), backward=None, op="leaf", requires_grad=False, name=None):
        if isinstance(value, np.ndarray):
            self.value = value
        elif isinstance(value, np.generic):  # numpy scalars from full reductions keep their dtype
            self.value = np.asarray(value)
        else:
            self.value = np.asarray(value, dtype=DEFAULT_DTYPE)
        self.grad = None
        self.parents = parents
        self._backward = backward
        self.op = op
        self.requires_grad = requires_grad
        self.name = name

    # convenience -----------------------------------------------------------
    @property
    def shape(self):
        return self.value.shape

    @property
    def dtype(self):
        return self.value.dtype

    @property
    def ndim(self):
        return self.value.ndim

    def item(self):
        return float(self.value)

    def numpy(self):
        return self.value

    def __repr__(self):
        return f"Tensor(op={self.op}, shape={self.shape}, dtype={self.dtype})"

    def detach(self):
        return Tensor(self.value, op="detach")

    def zero_grad(self):
        self.grad = None

    def _accumulate(self, g):
        if self.grad is None:
            self.grad = np.array(g, dtype=self.value.dtype, copy=True)
        else:
            self.grad += g

    def backward(self, grad=None):
        if grad is None:
            grad = np.ones_like(self.value)
        order = _topo_order(self)
        self._accumulate(np.asarray(grad, dtype=self.value.dtype))
        for node in reversed(order):
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)

    # operator sugar ----------------------------------------------------------
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

    def __pow__(self, p):
        return power(self, p)

    def __getitem__(self, idx):
        return getitem(self, idx)

    def sum(self, axis=None, keepdims=False):
        return sum_(self, axis, keepdims)

    def mean(self, axis=None, keepdims=False):
        return mean_reduce(self, axis, keepdims)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], tuple):
            shape = shape[0]
        return reshape(self, shape)


def _topo_order(root):
    order, seen = [], set()
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
        for p in node.parents:
            if p.requires_grad and id(p) not in seen:
                stack.append((p, False))
    return order


def as_tensor(x, dtype=None):
    if isinstance(x, Tensor):
        return x
    if dtype is None:
        arr = np.asarray(x)
        if not np.issubdtype(arr.dtype, np.floating):
            arr = arr.astype(DEFAULT_DTYPE)
    else:
        arr = np.asarray(x, dtype=dtype)
    return Tensor(arr, op="const")


def parameter(value, name=None):
    return Tensor(np.asarray(value), op="param", requires_grad=True, name=name)


def _make(value, parents, backward, op):
    req = any(p.requires_grad for p in parents)
    return Tensor(value, parents if req else (), backward if req else None, op, req)


def _unbroadcast(g, shape):
    if g.shape == shape:
        return g
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for i, n in enumerate(shape):
        if n == 1 and g.shape[i] != 1:
            g = g.sum(axis=i, keepdims=True)
    return g


def _pair(a, b):
    a = as_tensor(a)
    b = as_tensor(b, dtype=a.dtype)
    if a.dtype != b.dtype and b.op == "const":
        b = Tensor(b.value.astype(a.dtype), op="const")
    try:
        np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise DimensionError(f"cannot broadcast shapes {a.shape} and {b.shape}") from None
    return a, b


# elementwise binary -----------------------------------------------------------

def add(a, b):
    a, b = _pair(a, b)

    def bw(g):
        if a.requires_grad:
            a._accumulate(_unbroadcast(g, a.shape))
        if b.requires_grad:
            b._accumulate(_unbroadcast(g, b.shape))

    return _make(a.value + b.value, (a, b), bw, "add")


def sub(a, b):
    a, b = _pair(a, b)

    def bw(g):
        if a.requires_grad:
            a._accumulate(_unbroadcast(g, a.shape))
        if b.requires_grad:
            b._accumulate(_unbroadcast(-g, b.shape))

    return _make(a.value - b.value, (a, b), bw, "sub")


def mul(a, b):
    a, b = _pair(a, b)

    def bw(g):
        if a.requires_grad:
            a._accumulate(_unbroadcast(g * b.value, a.shape))
        if b.requires_grad:
            b._accumulate(_unbroadcast(g * a.value, b.shape))

    return _make(a.value * b.value, (a, b), bw, "mul")


def div(a, b):
    a, b = _pair(a, b)
    out = a.value / b.value

    def bw(g):
        if a.requires_grad:
            a._accumulate(_unbroadcast(g / b.value, a.shape))
        if b.requires_grad:
            b._accumulate(_unbroadcast(-g * out / b.value, b.shape))

    return _make(out, (a, b), bw, "div")


# elementwise unary ------------------------------------------------------------

def _unary(a, out, local_grad, op):
    a = as_tensor(a)

    def bw(g):
        a._accumulate(g * local_grad())

    return _make(out, (a,), bw, op)


def power(a, p):
    a = as_tensor(a)
    return _unary(a, a.value ** p, lambda: p * a.value ** (p - 1), "pow")


def exp(a):
    a = as_tensor(a)
    out = np.exp(a.value)
    return _unary(a, out, lambda: out, "exp")


def log(a):
    a = as_tensor(a)
    return _unary(a, np.log(a.value), lambda: 1.0 / a.value, "log")


def sqrt(a):
    a = as_tensor(a)
    out = np.sqrt(a.value)
    return _unary(a, out, lambda: 0.5 / out, "sqrt")


def tanh(a):
    a = as_tensor(a)
    out = np.tanh(a.value)
    return _unary(a, out, lambda: 1.0 - out * out, "tanh")


def _sigmoid(v):
    return 0.5 * (1.0 + np.tanh(0.5 * v))


def sigmoid(a):
    a = as_tensor(a)
    out = _sigmoid(a.value)
    return _unary(a, out, lambda: out * (1.0 - out), "sigmoid")


def swish(a):
    """x * sigmoid(x)."""
    a = as_tensor(a)
    s = _sigmoid(a.value)
    return _unary(a, a.value * s, lambda: s * (1.0 + a.value * (1.0 - s)), "swish")


def relu(a):
    a = as_tensor(a)
    return _unary(a, np.maximum(a.value, 0), lambda: (a.value > 0).astype(a.dtype), "relu")


def leaky_relu(a, slope=0.2):
    a = as_tensor(a)
    out = np.where(a.value > 0, a.value, slope * a.value)
    return _unary(a, out, lambda: np.where(a.value > 0, 1.0, slope).astype(a.dtype), "leaky_relu")


def absolute(a):
    a = as_tensor(a)
    return _unary(a, np.abs(a.value), lambda: np.sign(a.value), "abs")


def clip(a, lo, hi):
    """Clamp; gradient passes only where the input is strictly inside."""
    a = as_tensor(a)
    out = np.clip(a.value, lo, hi)
    return _unary(a, out, lambda: ((a.value > lo) & (a.value < hi)).astype(a.dtype), "clip")


# reductions / shape -------------------------------------------------------------

def sum_(a, axis=None, keepdims=False):
    a = as_tensor(a)
    out = np.sum(a.value, axis=axis, keepdims=keepdims)

    def bw(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        a._accumulate(np.broadcast_to(g, a.shape))

    return _make(np.asarray(out, dtype=a.dtype), (a,), bw, "sum")


def mean_reduce(a, axis=None, keepdims=False):
    a = as_tensor(a)
    n = a.value.size if axis is None else np.prod([a.shape[i] for i in np.atleast_1d(axis)])
    return mul(sum_(a, axis, keepdims), 1.0 / n)


def reshape(a, shape):
    a = as_tensor(a)

    def bw(g):
        a._accumulate(g.reshape(a.shape))

    return _make(a.value.reshape(shape), (a,), bw, "reshape")


def transpose(a, axes):
    a = as_tensor(a)
    inv = np.argsort(axes)

    def bw(g):
        a._accumulate(g.transpose(inv))

    return _make(a.value.transpose(axes), (a,), bw, "transpose")


def getitem(a, idx):
    a = as_tensor(a)

    def bw(g):
        full = np.zeros_like(a.value)
        np.add.at(full, idx, g) if _needs_add_at(idx) else full.__setitem__(idx, g)
        a._accumulate(full)

    return _make(a.value[idx], (a,), bw, "getitem")


def _needs_add_at(idx):
    items = idx if isinstance(idx, tuple) else (idx,)
    return any(isinstance(i, (list, np.ndarray)) for i in items)


def concat(tensors, axis=1):
    tensors = [as_tensor(t) for t in tensors]
    ref = tensors[0].shape
    for t in tensors[1:]:
        if t.ndim != len(ref) or any(
            t.shape[i] != ref[i] for i in range(len(ref)) if i != axis % len(ref)
        ):
            raise DimensionError(f"cannot concatenate shapes {ref} and {t.shape} on axis {axis}")
    sizes = [t.shape[axis] for t in tensors]
    bounds = np.cumsum(sizes)[:-1]

    def bw(g):
        for t, piece in zip(tensors, np.split(g, bounds, axis=axis)):
            if t.requires_grad:
                t._accumulate(piece)

    return _make(np.concatenate([t.value for t in tensors], axis=axis), tuple(tensors), bw, "concat")


def concat_channels(tensors):
    return concat(tensors, axis=1)


# losses ------------------------------------------------------------------------

def l1(a, b):
    """Mean absolute difference."""
    return mean_reduce(absolute(sub(a, b)))


def l2(a, b):
    """Mean squared difference."""
    d = sub(a, b)
    return mean_reduce(mul(d, d))


# dense layers ------------------------------------------------------------------

def linear(x, w, b=None):
    """x: (N, in); w: (out, in); b: (out,)."""
    x, w = as_tensor(x), as_tensor(w)
    if x.ndim != 2 or w.ndim != 2 or x.shape[1] != w.shape[1]:
        raise DimensionError(f"linear: input {x.shape} incompatible with weight {w.shape}")

    def bw(g):
        if x.requires_grad:
            x._accumulate(g @ w.value)
        if w.requires_grad:
            w._accumulate(g.T @ x.value)

    out = _make(x.value @ w.value.T, (x, w), bw, "linear")
    return add(out, b) if b is not None else out


def _im2col(xp, kh, kw, stride, ho, wo):
    n, c = xp.shape[:2]
    cols = np.empty((n, ho, wo, c, kh, kw), dtype=xp.dtype)
    for i in range(kh):
        for j in range(kw):
            patch = xp[:, :, i:i + stride * ho:stride, j:j + stride * wo:stride]
            cols[:, :, :, :, i, j] = patch.transpose(0, 2, 3, 1)
    return cols.reshape(n * ho * wo, c * kh * kw)


def conv2d(x, w, b=None, stride=1, padding="same"):
    """2-D cross-correlation. x: (N, C, H, W); w: (O, C, kh, kw).

    ``padding='same'`` pads k//2 on every side (output H/stride for odd k),
    ``'valid'`` pads nothing.
    """
    x, w = as_tensor(x), as_tensor(w)
    if x.ndim != 4 or w.ndim != 4 or x.shape[1] != w.shape[1]:
        raise DimensionError(f"conv2d: input {x.shape} incompatible with kernel {w.shape}")
    if stride not in (1, 2) or padding not in ("same", "valid"):
        raise ValueError(f"unsupported conv2d stride={stride} padding={padding}")
    n, c, h, wd = x.shape
    o, _, kh, kw = w.shape
    p = kh // 2 if padding == "same" else 0
    ho = (h + 2 * p - kh) // stride + 1
    wo = (wd + 2 * p - kw) // stride + 1
    if ho < 1 or wo < 1:
        raise DimensionError(f"conv2d: input {x.shape} too small for kernel {w.shape}")
    wmat = w.value.reshape(o, -1)

    if kh == 1 and kw == 1 and stride == 1:
        cols = x.value.transpose(0, 2, 3, 1).reshape(-1, c)
        xp = None
    else:
        xp = np.pad(x.value, ((0, 0), (0, 0), (p, p), (p, p))) if p else x.value
        cols = _im2col(xp, kh, kw, stride, ho, wo)
    out = (cols @ wmat.T).reshape(n, ho, wo, o).transpose(0, 3, 1, 2)

    def bw(g):
        gmat = g.transpose(0, 2, 3, 1).reshape(-1, o)
        if w.requires_grad:
            w._accumulate((gmat.T @ cols).reshape(w.shape))
        if x.requires_grad:
            dcols = gmat @ wmat
            if xp is None:
                x._accumulate(dcols.reshape(n, h, wd, c).transpose(0, 3, 1, 2))
                return
            dcols = dcols.reshape(n, ho, wo, c, kh, kw)
            dxp = np.zeros(xp.shape, dtype=xp.dtype)
            for i in range(kh):
                for j in range(kw):
                    dxp[:, :, i:i + stride * ho:stride, j:j + stride * wo:stride] += (
                        dcols[:, :, :, :, i, j].transpose(0, 3, 1, 2)
                    )
            x._accumulate(dxp[:, :, p:p + h, p:p + wd] if p else dxp)

    res = _make(np.ascontiguousarray(out), (x, w), bw, "conv2d")
    if b is not None:
        res = add(res, reshape(b, (1, -1, 1, 1)))
    return res


def nearest_upsample2x(x):
    x = as_tensor(x)
    out = x.value.repeat(2, axis=-2).repeat(2, axis=-1)

    def bw(g):
        *lead, h2, w2 = g.shape
        x._accumulate(g.reshape(*lead, h2 // 2, 2, w2 // 2, 2).sum(axis=(-3, -1)))

    return _make(out, (x,), bw, "upsample2x")


def avg_pool2x(x):
    x = as_tensor(x)
    *lead, h, w = x.shape
    if h % 2 or w % 2:
        raise DimensionError(f"avg_pool2x needs even spatial dims, got {x.shape}")
    out = x.value.reshape(*lead, h // 2, 2, w // 2, 2).mean(axis=(-3, -1))

    def bw(g):
        x._accumulate(0.25 * g.repeat(2, axis=-2).repeat(2, axis=-1))

    return _make(out, (x,), bw, "avg_pool2x")


def group_norm(x, groups, gamma, beta, eps=1e-5):
    """GroupNorm over (N, C, ...) with per-channel affine gamma/beta of shape (C,)."""
    x, gamma, beta = as_tensor(x), as_tensor(gamma), as_tensor(beta)
    n, c = x.shape[:2]
    if c % groups:
        raise DimensionError(f"group_norm: {c} channels not divisible into {groups} groups")
    xg = x.value.reshape(n, groups, -1)
    mu = xg.mean(axis=2, keepdims=True)
    var = xg.var(axis=2, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = ((xg - mu) * inv).reshape(x.shape)
    bshape = (1, c) + (1,) * (x.ndim - 2)
    out = xhat * gamma.value.reshape(bshape) + beta.value.reshape(bshape)
    red = (0,) + tuple(range(2, x.ndim))

    def bw(g):
        if gamma.requires_grad:
            gamma._accumulate((g * xhat).sum(axis=red))
        if beta.requires_grad:
            beta._accumulate(g.sum(axis=red))
        if x.requires_grad:
            dxhat = (g * gamma.value.reshape(bshape)).reshape(n, groups, -1)
            xh = xhat.reshape(n, groups, -1)
            m = xh.shape[2]
            dx = inv / m * (m * dxhat - dxhat.sum(axis=2, keepdims=True)
                            - xh * (dxhat * xh).sum(axis=2, keepdims=True))
            x._accumulate(dx.reshape(x.shape))

    return _make(out, (x, gamma, beta), bw, "group_norm")
