"""Minimal dense-tensor reverse-mode autodiff engine on numpy.

A Tensor wraps a float64 ndarray plus a backward closure; calling
``backward()`` on a scalar loss runs the tape in reverse topological order.
Every op broadcasts like numpy and un-broadcasts its gradients. Sized for
desk-scale training: no views, no in-place math, single logical thread.
"""

from __future__ import annotations

import numpy as np


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_backward", "_parents")

    def __init__(self, data, requires_grad: bool = False,
                 _parents: tuple = (), _backward=None):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad = None
        self.requires_grad = requires_grad or any(
            p.requires_grad for p in _parents)
        self._parents = _parents
        self._backward = _backward

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    def _accumulate(self, g: np.ndarray) -> None:
        if self.grad is None:
            self.grad = np.array(g, dtype=np.float64)
        else:
            self.grad += g

    def backward(self) -> None:
        if self.data.size != 1:
            raise ValueError("backward() requires a scalar loss")
        topo: list[Tensor] = []
        seen: set[int] = set()
        stack = [(self, False)]
        while stack:
            node, done = stack.pop()
            if done:
                topo.append(node)
                continue
            if id(node) in seen or not node.requires_grad:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                stack.append((p, False))
        self.grad = np.ones_like(self.data)
        for node in reversed(topo):
            if node._backward is not None:
                node._backward(node.grad)

    # -- operator sugar ----------------------------------------------------
    def __add__(self, other):
        return add(self, _wrap(other))

    __radd__ = __add__

    def __mul__(self, other):
        return mul(self, _wrap(other))

    __rmul__ = __mul__

    def __sub__(self, other):
        return add(self, mul(_wrap(other), _const(-1.0)))

    def __rsub__(self, other):
        return add(_wrap(other), mul(self, _const(-1.0)))

    def __neg__(self):
        return mul(self, _const(-1.0))

    def __truediv__(self, other):
        return div(self, _wrap(other))

    def __rtruediv__(self, other):
        return div(_wrap(other), self)

    def __matmul__(self, other):
        return matmul(self, _wrap(other))

    def __pow__(self, p):
        return powc(self, p)

    def __repr__(self):
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"


def _wrap(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(np.asarray(x, dtype=np.float64))


def _const(x) -> Tensor:
    return Tensor(np.asarray(x, dtype=np.float64))


def _unbroadcast(g: np.ndarray, shape: tuple) -> np.ndarray:
    """Reduce a broadcasted gradient back to the parent's shape."""
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, dim in enumerate(shape):
        if dim == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g


def _binary(a: Tensor, b: Tensor, out: np.ndarray, da, db) -> Tensor:
    def bw(g):
        if a.requires_grad:
            a._accumulate(_unbroadcast(da(g), a.shape))
        if b.requires_grad:
            b._accumulate(_unbroadcast(db(g), b.shape))
    return Tensor(out, _parents=(a, b), _backward=bw)


def _unary(a: Tensor, out: np.ndarray, da) -> Tensor:
    def bw(g):
        if a.requires_grad:
            a._accumulate(_unbroadcast(da(g), a.shape))
    return Tensor(out, _parents=(a,), _backward=bw)


# -- arithmetic ------------------------------------------------------------

def add(a: Tensor, b: Tensor) -> Tensor:
    return _binary(a, b, a.data + b.data, lambda g: g, lambda g: g)


def mul(a: Tensor, b: Tensor) -> Tensor:
    return _binary(a, b, a.data * b.data,
                   lambda g: g * b.data, lambda g: g * a.data)


def div(a: Tensor, b: Tensor) -> Tensor:
    return _binary(a, b, a.data / b.data,
                   lambda g: g / b.data,
                   lambda g: -g * a.data / (b.data ** 2))


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if b.ndim == 2 and a.ndim >= 2:
        # flatten leading axes into one GEMM; avoids batched matmul overhead
        lead = a.shape[:-1]
        a2 = a.data.reshape(-1, a.shape[-1])
        out = (a2 @ b.data).reshape(lead + (b.shape[-1],))

        def bw(g):
            g2 = g.reshape(-1, b.shape[-1])
            if a.requires_grad:
                a._accumulate((g2 @ b.data.T).reshape(a.shape))
            if b.requires_grad:
                b._accumulate(a2.T @ g2)
        return Tensor(out, _parents=(a, b), _backward=bw)
    out = a.data @ b.data

    def bw(g):
        if a.requires_grad:
            ga = g @ np.swapaxes(b.data, -1, -2)
            a._accumulate(_unbroadcast(ga, a.shape))
        if b.requires_grad:
            gb = np.swapaxes(a.data, -1, -2) @ g
            b._accumulate(_unbroadcast(gb, b.shape))
    return Tensor(out, _parents=(a, b), _backward=bw)


def powc(a: Tensor, p: float) -> Tensor:
    return _unary(a, a.data ** p, lambda g: g * p * a.data ** (p - 1))


def exp(a: Tensor) -> Tensor:
    out = np.exp(a.data)
    return _unary(a, out, lambda g: g * out)


def log(a: Tensor) -> Tensor:
    return _unary(a, np.log(a.data), lambda g: g / a.data)


def log1p(a: Tensor) -> Tensor:
    return _unary(a, np.log1p(a.data), lambda g: g / (1.0 + a.data))


def sqrt(a: Tensor) -> Tensor:
    out = np.sqrt(a.data)
    return _unary(a, out, lambda g: g * 0.5 / out)


def tanh(a: Tensor) -> Tensor:
    out = np.tanh(a.data)
    return _unary(a, out, lambda g: g * (1.0 - out ** 2))


def relu(a: Tensor) -> Tensor:
    mask = a.data > 0
    return _unary(a, a.data * mask, lambda g: g * mask)


def gelu(a: Tensor) -> Tensor:
    # tanh approximation; the VJP differentiates the same expression
    x = a.data
    c = np.sqrt(2.0 / np.pi)
    inner = c * (x + 0.044715 * x ** 3)
    t = np.tanh(inner)
    out = 0.5 * x * (1.0 + t)

    def da(g):
        d_inner = c * (1.0 + 3 * 0.044715 * x ** 2)
        return g * (0.5 * (1.0 + t) + 0.5 * x * (1.0 - t ** 2) * d_inner)
    return _unary(a, out, da)


# -- reductions and shape ops ---------------------------------------------

def sum_(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    out = a.data.sum(axis=axis, keepdims=keepdims)

    def da(g):
        g = np.asarray(g)
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return np.broadcast_to(g, a.shape).copy()
    return _unary(a, out, da)


def mean(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    n = a.data.size if axis is None else np.prod(
        [a.shape[ax] for ax in np.atleast_1d(axis)])
    return mul(sum_(a, axis=axis, keepdims=keepdims), _const(1.0 / n))


def reshape(a: Tensor, shape) -> Tensor:
    return _unary(a, a.data.reshape(shape),
                  lambda g: g.reshape(a.shape))


def transpose(a: Tensor, axes) -> Tensor:
    inv = np.argsort(axes)
    return _unary(a, a.data.transpose(axes),
                  lambda g: g.transpose(inv))


def concat(tensors: list[Tensor], axis: int = -1) -> Tensor:
    datas = [t.data for t in tensors]
    out = np.concatenate(datas, axis=axis)
    sizes = [d.shape[axis] for d in datas]
    offsets = np.cumsum([0] + sizes)

    def bw(g):
        for t, lo, hi in zip(tensors, offsets[:-1], offsets[1:]):
            if t.requires_grad:
                idx = [slice(None)] * g.ndim
                idx[axis] = slice(lo, hi)
                t._accumulate(g[tuple(idx)])
    return Tensor(out, _parents=tuple(tensors), _backward=bw)


def gather(a: Tensor, indices: np.ndarray, axis: int = 0) -> Tensor:
    out = np.take(a.data, indices, axis=axis)

    def da(g):
        full = np.zeros_like(a.data)
        moved = np.moveaxis(full, axis, 0)
        g_moved = np.moveaxis(g, axis, 0)
        np.add.at(moved, indices, g_moved)
        return np.moveaxis(moved, 0, axis)
    return _unary(a, out, da)


def masked_fill(a: Tensor, mask: np.ndarray, value: float) -> Tensor:
    mask = np.asarray(mask, dtype=bool)
    out = np.where(mask, value, a.data)
    return _unary(a, out, lambda g: np.where(mask, 0.0, g))


def softmax(a: Tensor, axis: int = -1) -> Tensor:
    z = a.data - a.data.max(axis=axis, keepdims=True)
    e = np.exp(z)
    out = e / e.sum(axis=axis, keepdims=True)

    def da(g):
        dot = (g * out).sum(axis=axis, keepdims=True)
        return out * (g - dot)
    return _unary(a, out, da)


def layernorm(a: Tensor, gamma: Tensor, beta: Tensor, axis: int = -1,
              eps: float = 1e-5) -> Tensor:
    """Normalize over `axis`, then scale/shift. Composed from primitives so
    the VJP is inherited."""
    mu = mean(a, axis=axis, keepdims=True)
    xc = a - mu
    var = mean(mul(xc, xc), axis=axis, keepdims=True)
    inv = powc(add(var, _const(eps)), -0.5)
    return add(mul(mul(xc, inv), gamma), beta)


def mse(pred: Tensor, target: Tensor, weight: np.ndarray | None = None) -> Tensor:
    """Mean squared error; with a weight array the mean runs over the weight
    mass instead of the element count."""
    d = pred - target
    sq = mul(d, d)
    if weight is None:
        return mean(sq)
    w = np.asarray(weight, dtype=np.float64)
    total = w.sum()
    if total == 0:
        raise ValueError("mse weight mass is zero")
    return mul(sum_(mul(sq, Tensor(w))), _const(1.0 / total))


def custom_op(inputs: list[Tensor], forward_fn, vjp_fn) -> Tensor:
    """Wrap an external forward/VJP pair (e.g. the spectral estimator) as a
    differentiable node. forward_fn takes raw arrays; vjp_fn(upstream) must
    return one gradient array per input (None for non-differentiable ones).
    """
    out = forward_fn(*[t.data for t in inputs])

    def bw(g):
        grads = vjp_fn(g)
        for t, gr in zip(inputs, grads):
            if t.requires_grad and gr is not None:
                t._accumulate(gr)
    return Tensor(out, _parents=tuple(inputs), _backward=bw)


# -- finite-difference checking -------------------------------------------

def finite_diff_grad(fn, x: np.ndarray, h: float = 1e-5) -> np.ndarray:
    """Central finite differences of a scalar fn at x."""
    g = np.zeros_like(x, dtype=np.float64)
    flat = x.reshape(-1)
    gf = g.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + h
        fp = fn(x)
        flat[i] = orig - h
        fm = fn(x)
        flat[i] = orig
        gf[i] = (fp - fm) / (2.0 * h)
    return g
