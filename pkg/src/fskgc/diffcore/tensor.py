"""Tape-free reverse-mode autodiff over numpy arrays.

Each :class:`Tensor` keeps references to its parents and a closure that maps
the output gradient to parent gradients. :meth:`Tensor.backward` walks the
graph in reverse topological order. Everything is float64.
"""
from __future__ import annotations

import contextlib
import threading

import numpy as np

_state = threading.local()


def _grad_enabled() -> bool:
    return getattr(_state, "enabled", True)


@contextlib.contextmanager
def no_grad():
    """Build no graph inside this block (forward-only evaluation)."""
    prev = _grad_enabled()
    _state.enabled = False
    try:
        yield
    finally:
        _state.enabled = prev


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    if grad.shape == shape:
        return grad
    ndim_extra = grad.ndim - len(shape)
    if ndim_extra > 0:
        grad = grad.sum(axis=tuple(range(ndim_extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")
    __array_priority__ = 100

    def __init__(self, data, requires_grad: bool = False, _parents=(), _backward=None):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad = None
        self.requires_grad = requires_grad
        self._parents = _parents
        self._backward = _backward

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data)

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    # graph construction -------------------------------------------------
    @staticmethod
    def _make(data, parents, backward):
        if _grad_enabled() and any(p.requires_grad for p in parents):
            return Tensor(data, True, parents, backward)
        return Tensor(data)

    def backward(self, grad=None):
        """Accumulate d(self)/d(leaf) into ``leaf.grad`` for every leaf."""
        if grad is None:
            grad = np.ones_like(self.data)
        order = []
        seen = set()
        stack = [(self, False)]
        while stack:
            node, done = stack.pop()
            if done:
                order.append(node)
                continue
            if id(node) in seen or not node.requires_grad:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if p.requires_grad and id(p) not in seen:
                    stack.append((p, False))
        grads = {id(self): np.asarray(grad, dtype=np.float64)}
        for node in reversed(order):
            g = grads.pop(id(node), None)
            if g is None:
                continue
            if node._backward is None:
                node.grad = g if node.grad is None else node.grad + g
                continue
            for p, pg in zip(node._parents, node._backward(g)):
                if pg is None or not p.requires_grad:
                    continue
                key = id(p)
                if key in grads:
                    grads[key] = grads[key] + pg
                else:
                    grads[key] = pg

    # arithmetic ---------------------------------------------------------
    def __add__(self, other):
        other = as_tensor(other)
        a, b = self.data.shape, other.data.shape
        return Tensor._make(
            self.data + other.data,
            (self, other),
            lambda g: (_unbroadcast(g, a), _unbroadcast(g, b)),
        )

    __radd__ = __add__

    def __neg__(self):
        return Tensor._make(-self.data, (self,), lambda g: (-g,))

    def __sub__(self, other):
        other = as_tensor(other)
        a, b = self.data.shape, other.data.shape
        return Tensor._make(
            self.data - other.data,
            (self, other),
            lambda g: (_unbroadcast(g, a), _unbroadcast(-g, b)),
        )

    def __rsub__(self, other):
        return as_tensor(other) - self

    def __mul__(self, other):
        other = as_tensor(other)
        x, y = self.data, other.data
        return Tensor._make(
            x * y,
            (self, other),
            lambda g: (_unbroadcast(g * y, x.shape), _unbroadcast(g * x, y.shape)),
        )

    __rmul__ = __mul__

    def __truediv__(self, other):
        other = as_tensor(other)
        x, y = self.data, other.data
        out = x / y
        return Tensor._make(
            out,
            (self, other),
            lambda g: (_unbroadcast(g / y, x.shape), _unbroadcast(-g * out / y, y.shape)),
        )

    def __rtruediv__(self, other):
        return as_tensor(other) / self

    def __pow__(self, p: float):
        x = self.data
        return Tensor._make(x**p, (self,), lambda g: (g * p * x ** (p - 1),))

    def __matmul__(self, other):
        other = as_tensor(other)
        x, y = self.data, other.data

        def back(g):
            if y.ndim == 1:
                gx = np.multiply.outer(g, y) if x.ndim > 1 else g * y
                gy = np.tensordot(g, x, axes=(range(g.ndim), range(x.ndim - 1)))
                return _unbroadcast(gx, x.shape), gy
            if x.ndim == 1:
                gx = g @ np.swapaxes(y, -1, -2)
                gy = np.multiply.outer(x, g)
                return gx, _unbroadcast(gy, y.shape)
            gx = g @ np.swapaxes(y, -1, -2)
            gy = np.swapaxes(x, -1, -2) @ g
            return _unbroadcast(gx, x.shape), _unbroadcast(gy, y.shape)

        return Tensor._make(x @ y, (self, other), back)

    def __getitem__(self, idx):
        shape = self.data.shape

        def back(g):
            out = np.zeros(shape)
            np.add.at(out, idx, g)
            return (out,)

        return Tensor._make(self.data[idx], (self,), back)

    # reductions and shape -----------------------------------------------
    def sum(self, axis=None, keepdims: bool = False):
        shape = self.data.shape

        def back(g):
            if axis is not None and not keepdims:
                g = np.expand_dims(g, axis)
            return (np.broadcast_to(g, shape),)

        return Tensor._make(self.data.sum(axis=axis, keepdims=keepdims), (self,), back)

    def mean(self, axis=None, keepdims: bool = False):
        n = self.data.size if axis is None else self.data.shape[axis]
        return self.sum(axis=axis, keepdims=keepdims) * (1.0 / n)

    def reshape(self, *shape):
        old = self.data.shape
        return Tensor._make(self.data.reshape(*shape), (self,), lambda g: (g.reshape(old),))

    def swapaxes(self, a: int, b: int):
        return Tensor._make(
            np.swapaxes(self.data, a, b), (self,), lambda g: (np.swapaxes(g, a, b),)
        )

    # elementwise --------------------------------------------------------
    def tanh(self):
        y = np.tanh(self.data)
        return Tensor._make(y, (self,), lambda g: (g * (1.0 - y * y),))

    def exp(self):
        y = np.exp(self.data)
        return Tensor._make(y, (self,), lambda g: (g * y,))

    def log(self):
        x = self.data
        return Tensor._make(np.log(x), (self,), lambda g: (g / x,))

    def sqrt(self):
        y = np.sqrt(self.data)
        return Tensor._make(y, (self,), lambda g: (g * 0.5 / y,))

    def abs(self):
        # subgradient 0 at 0
        s = np.sign(self.data)
        return Tensor._make(np.abs(self.data), (self,), lambda g: (g * s,))

    def relu(self):
        mask = self.data > 0
        return Tensor._make(np.where(mask, self.data, 0.0), (self,), lambda g: (g * mask,))

    def clip(self, lo: float, hi: float):
        mask = (self.data >= lo) & (self.data <= hi)
        return Tensor._make(np.clip(self.data, lo, hi), (self,), lambda g: (g * mask,))

    def softmax(self, axis: int = -1):
        z = self.data - self.data.max(axis=axis, keepdims=True)
        e = np.exp(z)
        y = e / e.sum(axis=axis, keepdims=True)

        def back(g):
            return (y * (g - (g * y).sum(axis=axis, keepdims=True)),)

        return Tensor._make(y, (self,), back)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def concat(tensors, axis: int = 0) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    sizes = [t.data.shape[axis] for t in tensors]
    splits = np.cumsum(sizes)[:-1]

    def back(g):
        return tuple(np.split(g, splits, axis=axis))

    return Tensor._make(
        np.concatenate([t.data for t in tensors], axis=axis), tuple(tensors), back
    )


def stack(tensors, axis: int = 0) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]

    def back(g):
        return tuple(np.take(g, i, axis=axis) for i in range(len(tensors)))

    return Tensor._make(np.stack([t.data for t in tensors], axis=axis), tuple(tensors), back)


def embedding(table: Tensor, ids: np.ndarray) -> Tensor:
    """Row lookup ``table[ids]`` with scatter-add backward."""
    ids = np.asarray(ids, dtype=np.int64)
    shape = table.data.shape

    def back(g):
        out = np.zeros(shape)
        np.add.at(out, ids.reshape(-1), g.reshape(-1, shape[1]))
        return (out,)

    return Tensor._make(table.data[ids], (table,), back)


def conv1d(x: Tensor, weight: Tensor, bias: Tensor, width: int, padding: int) -> Tensor:
    """1-d convolution along axis -2 of ``x`` (..., L, C_in).

    ``weight`` has shape (width * C_in, C_out) in im2col layout; ``padding``
    zero rows are added on both ends, so ``padding = width // 2`` keeps the
    length for odd widths and ``padding = 0`` is a valid convolution.
    """
    xd = x.data
    length, c_in = xd.shape[-2], xd.shape[-1]
    if padding:
        xp = np.zeros(xd.shape[:-2] + (length + 2 * padding, c_in))
        xp[..., padding : padding + length, :] = xd
    else:
        xp = xd
    out_len = length + 2 * padding - width + 1
    cols = np.concatenate([xp[..., j : j + out_len, :] for j in range(width)], axis=-1)
    w = weight.data
    out = cols @ w + bias.data

    def back(g):
        gw = cols.reshape(-1, cols.shape[-1]).T @ g.reshape(-1, g.shape[-1])
        gb = g.reshape(-1, g.shape[-1]).sum(axis=0)
        gcols = g @ w.T
        gxp = np.zeros(xp.shape)
        for j in range(width):
            gxp[..., j : j + out_len, :] += gcols[..., j * c_in : (j + 1) * c_in]
        gx = gxp[..., padding : padding + length, :] if padding else gxp
        return gx, gw, gb

    return Tensor._make(out, (x, weight, bias), back)


def instance_norm(x: Tensor, eps: float = 1e-5) -> Tensor:
    """Normalize each channel over the length axis (-2), no affine."""
    xd = x.data
    mu = xd.mean(axis=-2, keepdims=True)
    xc = xd - mu
    var = (xc * xc).mean(axis=-2, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    y = xc * inv

    def back(g):
        gm = g.mean(axis=-2, keepdims=True)
        gy = (g * y).mean(axis=-2, keepdims=True)
        return (inv * (g - gm - y * gy),)

    return Tensor._make(y, (x,), back)


def max_pool(x: Tensor, stride: int) -> Tensor:
    """Non-overlapping max pool over axis -2 with window = stride (ceil mode)."""
    xd = x.data
    length = xd.shape[-2]
    out_len = -(-length // stride)
    pad_len = out_len * stride - length
    if pad_len:
        xp = np.full(xd.shape[:-2] + (length + pad_len, xd.shape[-1]), -np.inf)
        xp[..., :length, :] = xd
    else:
        xp = xd
    win = xp.reshape(xd.shape[:-2] + (out_len, stride, xd.shape[-1]))
    arg = win.argmax(axis=-2)
    out = np.take_along_axis(win, arg[..., None, :], axis=-2)[..., 0, :]

    def back(g):
        gw = np.zeros(win.shape)
        np.put_along_axis(gw, arg[..., None, :], g[..., None, :], axis=-2)
        gx = gw.reshape(xp.shape)
        return (gx[..., :length, :],)

    return Tensor._make(out, (x,), back)


def cosine_rows(v: Tensor, rows: Tensor, eps: float = 1e-8) -> Tensor:
    """Cosine similarity of ``v`` (..., u) with each row of ``rows`` (..., n, u)."""
    dots = (rows * v.reshape(*v.shape[:-1], 1, v.shape[-1])).sum(axis=-1)
    vn = ((v * v).sum(axis=-1, keepdims=True)).sqrt() + eps
    rn = ((rows * rows).sum(axis=-1)).sqrt() + eps
    return dots / (vn * rn)
