"""Dense float64 tensors with reverse-mode differentiation.

Only what small fully-connected classifiers and their losses need: matmul,
broadcasting add/mul, ReLU, reductions, row softmax / log-softmax, cross
entropy, KL divergence, row L2 normalization and the CW margin.

A graph built by a forward pass supports exactly one backward pass. After
``backward()`` (or :func:`grad`) every interior node is released and any
further backward through it raises :class:`GraphError`. Leaves are reusable
across graphs; ``backward()`` accumulates into ``leaf.grad`` the way most
autograd libraries do, so callers zero it between steps.
"""
from __future__ import annotations

import numpy as np

from . import _kernels as K
from .errors import DegenerateLogitsError, DimensionError, GraphError

__all__ = [
    "Tensor",
    "as_tensor",
    "cross_entropy",
    "cw_margin_loss",
    "grad",
    "kl_divergence",
    "l2_normalize",
    "log_softmax",
    "matmul",
    "softmax",
    "NORM_EPS",
]

NORM_EPS = 1e-12


def _unbroadcast(g, shape):
    if g.shape == shape:
        return g
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g


class Tensor:
    """A node in a computation graph holding a float64 array."""

    __slots__ = ("data", "requires_grad", "grad", "op", "_parents", "_backward", "_released")

    def __init__(self, data, requires_grad=False):
        self.data = np.asarray(data, dtype=np.float64)
        self.requires_grad = bool(requires_grad)
        self.grad = None
        self.op = "leaf"
        self._parents = ()
        self._backward = None
        self._released = False

    @classmethod
    def _from_op(cls, data, parents, backward, op):
        out = cls.__new__(cls)
        out.data = data
        out.grad = None
        out.op = op
        out._released = False
        for p in parents:
            if p._released:
                raise GraphError(f"cannot build on a released graph node ({p.op})")
        if any(p.requires_grad for p in parents):
            out.requires_grad = True
            out._parents = parents
            out._backward = backward
        else:
            out.requires_grad = False
            out._parents = ()
            out._backward = None
        return out

    # -- basic info ----------------------------------------------------
    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def is_leaf(self):
        return self.op == "leaf"

    def item(self):
        return float(self.data)

    def numpy(self):
        return self.data

    def detach(self):
        return Tensor(self.data)

    def __repr__(self):
        return f"Tensor(shape={self.shape}, op={self.op!r}, requires_grad={self.requires_grad})"

    # -- arithmetic ----------------------------------------------------
    def __add__(self, other):
        other = as_tensor(other)
        a_shape, b_shape = self.shape, other.shape
        data = self.data + other.data
        return Tensor._from_op(
            data, (self, other),
            lambda g: (_unbroadcast(g, a_shape), _unbroadcast(g, b_shape)), "add")

    __radd__ = __add__

    def __neg__(self):
        return Tensor._from_op(-self.data, (self,), lambda g: (-g,), "neg")

    def __sub__(self, other):
        return self + (-as_tensor(other))

    def __rsub__(self, other):
        return as_tensor(other) + (-self)

    def __mul__(self, other):
        other = as_tensor(other)
        a, b = self.data, other.data
        return Tensor._from_op(
            a * b, (self, other),
            lambda g: (_unbroadcast(g * b, a.shape), _unbroadcast(g * a, b.shape)), "mul")

    __rmul__ = __mul__

    def __matmul__(self, other):
        return matmul(self, other)

    def square(self):
        a = self.data
        return Tensor._from_op(a * a, (self,), lambda g: (2.0 * a * g,), "square")

    def relu(self):
        a = self.data
        return Tensor._from_op(K.relu(a), (self,), lambda g: (K.relu_backward(a, g),), "relu")

    def sum(self, axis=None):
        shape = self.shape
        data = self.data.sum(axis=axis)
        if axis is None:
            back = lambda g: (np.broadcast_to(g, shape).copy(),)  # noqa: E731
        else:
            back = lambda g: (np.broadcast_to(np.expand_dims(g, axis), shape).copy(),)  # noqa: E731
        return Tensor._from_op(np.asarray(data, dtype=np.float64), (self,), back, "sum")

    def mean(self):
        n = self.data.size
        return self.sum() * (1.0 / n)

    # -- backward ------------------------------------------------------
    def backward(self):
        """Backpropagate from this scalar node.

        Accumulates into ``.grad`` of every reachable leaf that requires a
        gradient and returns a ``{leaf: gradient}`` map.
        """
        grads = _run_backward(self)
        for leaf, g in grads.items():
            leaf.grad = g.copy() if leaf.grad is None else leaf.grad + g
        return grads


def as_tensor(x):
    return x if isinstance(x, Tensor) else Tensor(x)


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
        for p in node._parents:
            if p.requires_grad and id(p) not in seen:
                stack.append((p, False))
    return order


def _run_backward(root):
    if root._released:
        raise GraphError("graph already consumed by a previous backward pass")
    if root.data.size != 1 or root.data.ndim > 1:
        raise GraphError(f"backward needs a scalar root, got shape {root.shape}")
    if not root.requires_grad:
        raise GraphError("root does not depend on any tensor that requires a gradient")
    order = _topo_order(root)
    adj = {id(root): np.ones_like(root.data)}
    leaf_grads = {}
    for node in reversed(order):
        g = adj.pop(id(node), None)
        if node.is_leaf:
            if g is not None:
                leaf_grads[node] = g
            continue
        if g is not None:
            parent_grads = node._backward(g)
            for p, pg in zip(node._parents, parent_grads):
                if pg is None or not p.requires_grad:
                    continue
                prev = adj.get(id(p))
                adj[id(p)] = pg if prev is None else prev + pg
        node._backward = None
        node._parents = ()
        node._released = True
    return leaf_grads


def grad(root, inputs):
    """Gradients of scalar ``root`` w.r.t. each tensor in ``inputs``.

    Unlike :meth:`Tensor.backward`, nothing is accumulated into ``.grad``.
    Inputs that ``root`` does not depend on get a zero array.
    """
    grads = _run_backward(root)
    return [grads.get(t, np.zeros_like(t.data)) for t in inputs]


# --- functional ops ------------------------------------------------------

def matmul(a, b):
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise DimensionError(f"matmul shape mismatch: {a.shape} @ {b.shape}")
    ad, bd = a.data, b.data
    return Tensor._from_op(
        ad @ bd, (a, b),
        lambda g: (g @ bd.T if a.requires_grad else None,
                   ad.T @ g if b.requires_grad else None), "matmul")


def _check_2d(t, name):
    if t.ndim != 2:
        raise DimensionError(f"{name} expects a [batch x classes] tensor, got shape {t.shape}")


def log_softmax(logits):
    logits = as_tensor(logits)
    _check_2d(logits, "log_softmax")
    out = K.log_softmax_rows(logits.data)
    p = np.exp(out)
    return Tensor._from_op(
        out, (logits,), lambda g: (g - p * g.sum(axis=1, keepdims=True),), "log_softmax")


def softmax(logits):
    logits = as_tensor(logits)
    _check_2d(logits, "softmax")
    if logits.shape[1] < 2:
        raise DimensionError(f"softmax needs at least 2 classes, got shape {logits.shape}")
    s = np.exp(K.log_softmax_rows(logits.data))
    return Tensor._from_op(
        s, (logits,), lambda g: (s * (g - (g * s).sum(axis=1, keepdims=True)),), "softmax")


def _check_labels(labels, n, c):
    y = np.asarray(labels)
    if y.shape != (n,):
        raise DimensionError(f"expected {n} labels, got shape {y.shape}")
    if not np.issubdtype(y.dtype, np.integer):
        if np.any(y != np.round(y)):
            raise IndexError("labels must be integer class indices")
        y = y.astype(np.int64)
    if n and (y.min() < 0 or y.max() >= c):
        raise IndexError(f"label out of range [0, {c}): min {y.min()}, max {y.max()}")
    return y


def _reduce(per_example, reduction):
    if reduction == "mean":
        return per_example.mean(), 1.0 / per_example.size
    if reduction == "sum":
        return per_example.sum(), 1.0
    raise ValueError(f"unknown reduction {reduction!r}")


def cross_entropy(logits, labels, reduction="mean"):
    """Mean (or summed) negative log-likelihood of ``labels`` under softmax(logits)."""
    logits = as_tensor(logits)
    _check_2d(logits, "cross_entropy")
    n, c = logits.shape
    y = _check_labels(labels, n, c)
    logp = K.log_softmax_rows(logits.data)
    rows = np.arange(n)
    value, scale = _reduce(-logp[rows, y], reduction)

    def back(g):
        d = np.exp(logp)
        d[rows, y] -= 1.0
        return (d * (g * scale),)

    return Tensor._from_op(np.asarray(value), (logits,), back, "cross_entropy")


def kl_divergence(p_logits, q_logits, reduction="mean"):
    """KL(softmax(p_logits) || softmax(q_logits)), reduced over the batch."""
    p_logits, q_logits = as_tensor(p_logits), as_tensor(q_logits)
    if p_logits.shape != q_logits.shape:
        raise DimensionError(f"kl_divergence shape mismatch: {p_logits.shape} vs {q_logits.shape}")
    _check_2d(p_logits, "kl_divergence")
    logp = K.log_softmax_rows(p_logits.data)
    logq = K.log_softmax_rows(q_logits.data)
    p = np.exp(logp)
    diff = logp - logq
    rows = (p * diff).sum(axis=1)
    value, scale = _reduce(rows, reduction)

    def back(g):
        gs = g * scale
        gp = p * (diff - rows[:, None]) * gs if p_logits.requires_grad else None
        gq = (np.exp(logq) - p) * gs if q_logits.requires_grad else None
        return gp, gq

    return Tensor._from_op(np.asarray(value), (p_logits, q_logits), back, "kl_divergence")


def l2_normalize(v, eps=NORM_EPS):
    """Divide each row by its Euclidean norm; rows with norm < eps are an error."""
    v = as_tensor(v)
    _check_2d(v, "l2_normalize")
    norms = np.sqrt((v.data * v.data).sum(axis=1, keepdims=True))
    bad = np.flatnonzero(norms[:, 0] < eps)
    if bad.size:
        raise DegenerateLogitsError(
            f"row {int(bad[0])} has L2 norm {float(norms[bad[0], 0]):.3g} < {eps:g}")
    out = v.data / norms

    def back(g):
        return ((g - out * (g * out).sum(axis=1, keepdims=True)) / norms,)

    return Tensor._from_op(out, (v,), back, "l2_normalize")


def cw_margin_loss(logits, labels, kappa=0.0, reduction="sum"):
    """min(max_{j != y} z_j - z_y, kappa) per example.

    Rises while the true class still wins and saturates once the runner-up
    leads by ``kappa``; this is the negated Carlini-Wagner objective
    max(z_y - max_{j != y} z_j, -kappa).
    """
    logits = as_tensor(logits)
    _check_2d(logits, "cw_margin_loss")
    n, c = logits.shape
    y = _check_labels(labels, n, c)
    z = logits.data
    rows = np.arange(n)
    others = z.copy()
    others[rows, y] = -np.inf
    runner = others.argmax(axis=1)
    margin = z[rows, runner] - z[rows, y]
    active = margin < kappa
    per = np.where(active, margin, kappa)
    value, scale = _reduce(per, reduction)

    def back(g):
        d = np.zeros_like(z)
        w = active * (g * scale)
        d[rows, runner] += w
        d[rows, y] -= w
        return (d,)

    return Tensor._from_op(np.asarray(value), (logits,), back, "cw_margin")
