"""A minimal tape-free reverse-mode differentiation engine over numpy arrays.

Each :class:`Tensor` remembers its parents and a closure that maps the output
cotangent to parent cotangents. :meth:`Tensor.backward` walks the graph in
reverse topological order. Only the operations the transformer needs are
provided; layer norm, GELU, masked softmax and the weighted loss are fused so
their derivatives are exact closed forms rather than chains of primitives.
"""
from __future__ import annotations

import math

import numpy as np


class Tensor:
    __slots__ = ("data", "grad", "parents", "backward_fn", "requires_grad")

    def __init__(self, data, parents=(), backward_fn=None, requires_grad=None):
        self.data = data if isinstance(data, np.ndarray) else np.asarray(data, dtype=np.float64)
        self.grad = None
        self.parents = parents
        self.backward_fn = backward_fn
        if requires_grad is None:
            requires_grad = any(p.requires_grad for p in parents)
        self.requires_grad = requires_grad

    @property
    def shape(self):
        return self.data.shape

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"

    def __add__(self, other):
        return add(self, other)

    def __mul__(self, other):
        return mul(self, other)

    def __sub__(self, other):
        return add(self, mul(other, -1.0))

    def __matmul__(self, other):
        return matmul(self, other)

    def backward(self, seed=None):
        order = _topological(self)
        self.grad = np.ones_like(self.data) if seed is None else np.asarray(seed, dtype=np.float64)
        for node in reversed(order):
            if node.backward_fn is None or node.grad is None:
                continue
            grads = node.backward_fn(node.grad)
            for parent, g in zip(node.parents, grads):
                if g is None or not parent.requires_grad:
                    continue
                parent.grad = g if parent.grad is None else parent.grad + g


def _topological(root):
    order, seen = [], set()
    stack = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen or not node.requires_grad:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node.parents:
            if id(p) not in seen and p.requires_grad:
                stack.append((p, False))
    return order


def param(data):
    return Tensor(np.asarray(data, dtype=np.float64), requires_grad=True)


def constant(data):
    return Tensor(np.asarray(data, dtype=np.float64), requires_grad=False)


def _as_tensor(x):
    return x if isinstance(x, Tensor) else constant(x)


def _unbroadcast(g, shape):
    """Sum a broadcast cotangent back down to ``shape``."""
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g


def add(a, b):
    a, b = _as_tensor(a), _as_tensor(b)
    out = a.data + b.data
    return Tensor(out, (a, b), lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)))


def mul(a, b):
    """Elementwise product; ``b`` may be a plain array or scalar constant."""
    a = _as_tensor(a)
    if isinstance(b, Tensor):
        return Tensor(a.data * b.data, (a, b),
                      lambda g: (_unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)))
    c = np.asarray(b, dtype=np.float64)
    return Tensor(a.data * c, (a,), lambda g: (_unbroadcast(g * c, a.shape),))


def matmul(a, b):
    """``a @ b`` with operands made contiguous so batched products are layout independent."""
    ad, bd = np.ascontiguousarray(a.data), np.ascontiguousarray(b.data)
    out = np.matmul(ad, bd)

    def back(g):
        g = np.ascontiguousarray(g)
        ga = gb = None
        if a.requires_grad:
            ga = np.matmul(g, np.ascontiguousarray(np.swapaxes(bd, -1, -2)))
            ga = _unbroadcast(ga, a.shape)
        if b.requires_grad:
            if bd.ndim == 2:
                gb = np.ascontiguousarray(ad.reshape(-1, ad.shape[-1]).T) @ g.reshape(-1, g.shape[-1])
            else:
                gb = _unbroadcast(np.matmul(np.ascontiguousarray(np.swapaxes(ad, -1, -2)), g), b.shape)
        return ga, gb

    return Tensor(out, (a, b), back)


def linear(x, w, b=None):
    """x @ w (+ b) on the trailing axis."""
    y = matmul(x, w)
    return y if b is None else add(y, b)


def reshape(x, shape):
    old = x.shape
    return Tensor(x.data.reshape(shape), (x,), lambda g: (g.reshape(old),))


def transpose(x, axes):
    inv = np.argsort(axes)
    return Tensor(np.ascontiguousarray(x.data.transpose(axes)), (x,),
                  lambda g: (np.ascontiguousarray(g.transpose(inv)),))


def roll(x, shifts, axes):
    neg = tuple(-s for s in shifts)
    return Tensor(np.roll(x.data, shifts, axes), (x,), lambda g: (np.roll(g, neg, axes),))

def slice_(x, index):
    """Basic slicing; the cotangent is scattered back into zeros."""
    def back(g):
        full = np.zeros_like(x.data)
        full[index] = g
        return (full,)

    return Tensor(np.ascontiguousarray(x.data[index]), (x,), back)

def layer_norm(x, gamma, beta, eps=1e-5):
    mu = x.data.mean(axis=-1, keepdims=True)
    xc = x.data - mu
    var = (xc * xc).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = xc * inv
    out = xhat * gamma.data + beta.data

    def back(g):
        gxhat = g * gamma.data
        n = x.shape[-1]
        gx = inv / n * (n * gxhat - gxhat.sum(axis=-1, keepdims=True)
                        - xhat * (gxhat * xhat).sum(axis=-1, keepdims=True))
        lead = tuple(range(g.ndim - 1))
        return gx, (g * xhat).sum(axis=lead), g.sum(axis=lead)

    return Tensor(out, (x, gamma, beta), back)

_GELU_C = math.sqrt(2.0 / math.pi)

def gelu(x):
    """tanh approximation: 0.5 x (1 + tanh(sqrt(2/pi) (x + 0.044715 x^3)))."""
    xd = x.data
    inner = _GELU_C * (xd + 0.044715 * xd ** 3)
    th = np.tanh(inner)
    out = 0.5 * xd * (1.0 + th)

    def back(g):
        dinner = _GELU_C * (1.0 + 3 * 0.044715 * xd * xd)
        return (g * (0.5 * (1.0 + th) + 0.5 * xd * (1.0 - th * th) * dinner),)

    return Tensor(out, (x,), back)

def softmax(x, allowed=None):
    """Softmax over the last axis; entries where ``allowed`` is False get -inf logits."""
    logits = x.data if allowed is None else np.where(allowed, x.data, -np.inf)
    shifted = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    p = e / e.sum(axis=-1, keepdims=True)

    def back(g):
        gx = p * (g - (g * p).sum(axis=-1, keepdims=True))
        return (gx,)

    return Tensor(p, (x,), back)

def weighted_sq_error(pred, target, weights):
    """sum(weights * (pred - target)^2) for constant ``target`` and ``weights``."""
    diff = pred.data - target
    out = np.asarray((weights * diff * diff).sum())
    return Tensor(out, (pred,), lambda g: (2.0 * g * weights * diff,))
