"""Minimal reverse-mode automatic differentiation over dense numpy arrays.

Only the operations the encoder-decoder pipeline actually needs are
implemented: affine maps, elementwise nonlinearities, concatenation,
indexing, reductions, a stabilized softmax and clamped logs. Each op
records a backward closure; ``Tensor.backward`` walks the graph in
reverse topological order.
"""
from __future__ import annotations

from contextlib import contextmanager

import numpy as np

from .errors import DimensionError, EmptyInputError

LOG_EPS = 1e-12

_grad_enabled = True


@contextmanager
def no_grad():
    """Disable graph recording inside the block (inference fast path)."""
    global _grad_enabled
    prev = _grad_enabled
    _grad_enabled = False
    try:
        yield
    finally:
        _grad_enabled = prev


def grad_enabled():
    return _grad_enabled


def _unbroadcast(grad, shape):
    """Sum `grad` down to `shape` (reverse of numpy broadcasting)."""
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


class Tensor:
    """Dense real array plus an optional gradient and backward closure."""

    __slots__ = ("values", "requires_grad", "grad", "_links")

    def __init__(self, values, requires_grad=False, _links=()):
        self.values = np.asarray(values, dtype=np.float64)
        assert np.all(np.isfinite(self.values)), "non-finite tensor values"
        self.requires_grad = bool(requires_grad) and _grad_enabled
        self.grad = None
        # _links: sequence of (parent, fn) where fn maps upstream grad to
        # the parent's grad contribution.
        self._links = _links if self.requires_grad else ()

    # -- construction helpers ------------------------------------------------

    @property
    def shape(self):
        return self.values.shape

    @property
    def size(self):
        return self.values.size

    def item(self):
        return float(self.values)

    def detach(self):
        return Tensor(self.values)

    def __repr__(self):
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"

    # -- autodiff ------------------------------------------------------------

    def backward(self, seed=None):
        if seed is None:
            if self.values.size != 1:
                raise DimensionError("backward() without seed needs a scalar",
                                     self.shape, "scalar")
            seed = np.ones_like(self.values)
        topo = []
        seen = set()
        stack = [(self, False)]
        while stack:
            node, done = stack.pop()
            if done:
                topo.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for parent, _ in node._links:
                if parent.requires_grad and id(parent) not in seen:
                    stack.append((parent, False))
        self.grad = np.asarray(seed, dtype=np.float64)
        for node in reversed(topo):
            if node.grad is None:
                continue
            for parent, fn in node._links:
                if not parent.requires_grad:
                    continue
                contrib = fn(node.grad)
                assert np.all(np.isfinite(contrib)), "non-finite gradient"
                if parent.grad is None:
                    parent.grad = np.zeros_like(parent.values)
                parent.grad += contrib

    def zero_grad(self):
        self.grad = None

    # -- arithmetic ----------------------------------------------------------

    def __add__(self, other):
        other = as_tensor(other)
        out_vals = self.values + other.values
        links = []
        if self.requires_grad:
            links.append((self, lambda g, s=self.shape: _unbroadcast(g, s)))
        if other.requires_grad:
            links.append((other, lambda g, s=other.shape: _unbroadcast(g, s)))
        return Tensor(out_vals, requires_grad=bool(links), _links=links)

    __radd__ = __add__

    def __neg__(self):
        links = []
        if self.requires_grad:
            links.append((self, lambda g: -g))
        return Tensor(-self.values, requires_grad=bool(links), _links=links)

    def __sub__(self, other):
        return self + (-as_tensor(other))

    def __rsub__(self, other):
        return as_tensor(other) + (-self)

    def __mul__(self, other):
        other = as_tensor(other)
        out_vals = self.values * other.values
        links = []
        if self.requires_grad:
            links.append((self, lambda g, o=other.values, s=self.shape:
                          _unbroadcast(g * o, s)))
        if other.requires_grad:
            links.append((other, lambda g, o=self.values, s=other.shape:
                          _unbroadcast(g * o, s)))
        return Tensor(out_vals, requires_grad=bool(links), _links=links)

    __rmul__ = __mul__

    def __truediv__(self, scalar):
        return self * (1.0 / float(scalar))

    def __matmul__(self, other):
        other = as_tensor(other)
        a, b = self.values, other.values
        try:
            out_vals = a @ b
        except ValueError as exc:
            raise DimensionError("matmul shape mismatch", a.shape, b.shape) from exc
        links = []
        if self.requires_grad:
            def da(g, a=a, b=b):
                if a.ndim == 1 and b.ndim == 2:
                    return g @ b.T
                if a.ndim == 2 and b.ndim == 1:
                    return np.outer(g, b)
                if a.ndim == 1 and b.ndim == 1:
                    return g * b
                return g @ b.T
            links.append((self, da))
        if other.requires_grad:
            def db(g, a=a, b=b):
                if a.ndim == 1 and b.ndim == 2:
                    return np.outer(a, g)
                if a.ndim == 2 and b.ndim == 1:
                    return a.T @ g
                if a.ndim == 1 and b.ndim == 1:
                    return g * a
                return a.T @ g
            links.append((other, db))
        return Tensor(out_vals, requires_grad=bool(links), _links=links)

    def __getitem__(self, index):
        out_vals = self.values[index]
        links = []
        if self.requires_grad:
            def back(g, index=index, shape=self.values.shape):
                full = np.zeros(shape)
                np.add.at(full, index, g)
                return full
            links.append((self, back))
        return Tensor(out_vals, requires_grad=bool(links), _links=links)

    # -- nonlinearities ------------------------------------------------------

    def tanh(self):
        out_vals = np.tanh(self.values)
        links = []
        if self.requires_grad:
            links.append((self, lambda g, y=out_vals: g * (1.0 - y * y)))
        return Tensor(out_vals, requires_grad=bool(links), _links=links)

    def sigmoid(self):
        out_vals = 0.5 * (1.0 + np.tanh(0.5 * self.values))
        links = []
        if self.requires_grad:
            links.append((self, lambda g, y=out_vals: g * y * (1.0 - y)))
        return Tensor(out_vals, requires_grad=bool(links), _links=links)

    def relu(self):
        out_vals = np.maximum(self.values, 0.0)
        links = []
        if self.requires_grad:
            links.append((self, lambda g, m=(self.values > 0.0): g * m))
        return Tensor(out_vals, requires_grad=bool(links), _links=links)

    def exp(self):
        out_vals = np.exp(self.values)
        links = []
        if self.requires_grad:
            links.append((self, lambda g, y=out_vals: g * y))
        return Tensor(out_vals, requires_grad=bool(links), _links=links)

    def log(self):
        """Natural log with epsilon clamping (inputs assumed nonnegative)."""
        clamped = np.maximum(self.values, LOG_EPS)
        out_vals = np.log(clamped)
        links = []
        if self.requires_grad:
            links.append((self, lambda g, c=clamped: g / c))
        return Tensor(out_vals, requires_grad=bool(links), _links=links)

    # -- reductions & shaping ------------------------------------------------

    def sum(self, axis=None):
        out_vals = self.values.sum(axis=axis)
        links = []
        if self.requires_grad:
            def back(g, axis=axis, shape=self.values.shape):
                if axis is None:
                    return np.full(shape, g)
                return np.broadcast_to(np.expand_dims(g, axis), shape).copy()
            links.append((self, back))
        return Tensor(out_vals, requires_grad=bool(links), _links=links)

    def mean(self, axis=None):
        n = self.values.size if axis is None else self.values.shape[axis]
        return self.sum(axis=axis) / n

    def max(self, axis):
        """Max reduction; gradient routes to the (first) argmax entries."""
        out_vals = self.values.max(axis=axis)
        links = []
        if self.requires_grad:
            arg = self.values.argmax(axis=axis)

            def back(g, axis=axis, arg=arg, shape=self.values.shape):
                full = np.zeros(shape)
                idx = list(np.indices(out_vals.shape))
                idx.insert(axis if axis >= 0 else len(shape) + axis, arg)
                full[tuple(idx)] = g
                return full
            links.append((self, back))
        return Tensor(out_vals, requires_grad=bool(links), _links=links)

    def reshape(self, *shape):
        out_vals = self.values.reshape(*shape)
        links = []
        if self.requires_grad:
            links.append((self, lambda g, s=self.values.shape: g.reshape(s)))
        return Tensor(out_vals, requires_grad=bool(links), _links=links)


def as_tensor(x):
    if isinstance(x, Tensor):
        return x
    return Tensor(np.asarray(x, dtype=np.float64))


def concat(tensors, axis=0):
    """Concatenate 1-D or 2-D tensors along `axis`."""
    tensors = [as_tensor(t) for t in tensors]
    if not tensors:
        raise EmptyInputError("concat of zero tensors")
    out_vals = np.concatenate([t.values for t in tensors], axis=axis)
    links = []
    offset = 0
    for t in tensors:
        width = t.values.shape[axis]
        if t.requires_grad:
            sl = [slice(None)] * out_vals.ndim
            sl[axis] = slice(offset, offset + width)
            links.append((t, lambda g, sl=tuple(sl): g[sl]))
        offset += width
    return Tensor(out_vals, requires_grad=bool(links), _links=links)


def stack(tensors, axis=0):
    tensors = [as_tensor(t) for t in tensors]
    if not tensors:
        raise EmptyInputError("stack of zero tensors")
    out_vals = np.stack([t.values for t in tensors], axis=axis)
    links = []
    for i, t in enumerate(tensors):
        if t.requires_grad:
            links.append((t, lambda g, i=i, axis=axis: np.take(g, i, axis=axis)))
    return Tensor(out_vals, requires_grad=bool(links), _links=links)


def softmax(logits, axis=-1):
    """Stabilized softmax along `axis`; output sums to 1 and is >= 0."""
    logits = as_tensor(logits)
    if logits.values.shape[axis] == 0:
        raise EmptyInputError("softmax over an empty axis")
    shifted = logits.values - logits.values.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    probs = e / e.sum(axis=axis, keepdims=True)
    links = []
    if logits.requires_grad:
        def back(g, p=probs, axis=axis):
            dot = (g * p).sum(axis=axis, keepdims=True)
            return p * (g - dot)
        links.append((logits, back))
    return Tensor(probs, requires_grad=bool(links), _links=links)


def embedding_lookup(table, indices):
    """Rows of a (V, d) parameter tensor; backward scatter-adds."""
    table = as_tensor(table)
    indices = np.asarray(indices, dtype=np.intp)
    out_vals = table.values[indices]
    links = []
    if table.requires_grad:
        def back(g, indices=indices, shape=table.values.shape):
            full = np.zeros(shape)
            np.add.at(full, indices, g)
            return full
        links.append((table, back))
    return Tensor(out_vals, requires_grad=bool(links), _links=links)


def conv1d_windows(inputs, weight, bias, width):
    """Sliding-window 1-D convolution over a (n, d) sequence.

    weight has shape (width * d, filters); output is (n - width + 1, filters).
    """
    inputs, weight, bias = as_tensor(inputs), as_tensor(weight), as_tensor(bias)
    n, d = inputs.values.shape
    if n < width:
        raise DimensionError("sequence shorter than filter width", n, width)
    windows = np.stack([inputs.values[i:i + width].ravel()
                        for i in range(n - width + 1)])
    out_vals = windows @ weight.values + bias.values
    links = []
    if inputs.requires_grad:
        def d_in(g, w=weight.values, n=n, d=d, width=width):
            flat = g @ w.T
            full = np.zeros((n, d))
            for i in range(flat.shape[0]):
                full[i:i + width] += flat[i].reshape(width, d)
            return full
        links.append((inputs, d_in))
    if weight.requires_grad:
        links.append((weight, lambda g, x=windows: x.T @ g))
    if bias.requires_grad:
        links.append((bias, lambda g: g.sum(axis=0)))
    return Tensor(out_vals, requires_grad=bool(links), _links=links)
