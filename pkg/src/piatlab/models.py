"""Small fully-connected classifiers with a flat parameter view."""
from __future__ import annotations

import hashlib
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, LayoutError
from .seeding import generator
from .tensor import Tensor, as_tensor, matmul

__all__ = ["LayerSlice", "ParamVector", "MLP", "build_mlp", "get_params", "set_params"]


@dataclass(frozen=True)
class LayerSlice:
    name: str
    start: int
    stop: int
    shape: tuple

    @property
    def size(self):
        return self.stop - self.start


@dataclass(frozen=True, eq=False)
class ParamVector:
    """Flat float64 parameter vector plus the layout that names its slices."""

    values: np.ndarray
    layout: tuple

    def __post_init__(self):
        values = np.ascontiguousarray(self.values, dtype=np.float64)
        if values.ndim != 1:
            raise LayoutError(f"parameter vector must be 1-D, got shape {values.shape}")
        expected = self.layout[-1].stop if self.layout else 0
        if values.size != expected:
            raise LayoutError(f"parameter vector has {values.size} entries, layout needs {expected}")
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "layout", tuple(self.layout))

    def __len__(self):
        return self.values.size

    def slice(self, name):
        for s in self.layout:
            if s.name == name:
                return self.values[s.start:s.stop].reshape(s.shape)
        raise KeyError(name)

    def copy(self):
        return ParamVector(self.values.copy(), self.layout)

    def fingerprint(self):
        return hashlib.sha256(self.values.tobytes()).hexdigest()

    def same_layout(self, other):
        return self.layout == other.layout

    def with_values(self, values):
        return ParamVector(values, self.layout)


def _dense_layout(dims):
    layout, offset = [], 0
    for i, (fan_in, fan_out) in enumerate(zip(dims[:-1], dims[1:])):
        layout.append(LayerSlice(f"dense{i}.weight", offset, offset + fan_in * fan_out, (fan_in, fan_out)))
        offset += fan_in * fan_out
        layout.append(LayerSlice(f"dense{i}.bias", offset, offset + fan_out, (fan_out,)))
        offset += fan_out
    return tuple(layout)


class MLP:
    """ReLU multilayer perceptron producing raw logits.

    Parameters live in one contiguous float64 buffer; the per-layer leaf
    tensors are views into it, so ``set_params`` is a single copy and
    gradients can be gathered back into the same flat order.
    """

    def __init__(self, input_dim, hidden_widths, n_classes):
        problems = []
        if int(input_dim) < 1:
            problems.append(("input_dim", f"must be >= 1, got {input_dim}"))
        if int(n_classes) < 2:
            problems.append(("n_classes", f"must be >= 2, got {n_classes}"))
        for i, w in enumerate(hidden_widths):
            if int(w) < 1:
                problems.append((f"hidden_widths[{i}]", f"must be positive, got {w}"))
        if problems:
            raise ConfigError(problems)
        self.input_dim = int(input_dim)
        self.hidden_widths = tuple(int(w) for w in hidden_widths)
        self.n_classes = int(n_classes)
        self.dims = (self.input_dim, *self.hidden_widths, self.n_classes)
        self.layout = _dense_layout(self.dims)
        self._flat = np.zeros(self.layout[-1].stop)
        self._leaves = [Tensor(self._flat[s.start:s.stop].reshape(s.shape), requires_grad=True)
                        for s in self.layout]

    @property
    def n_params(self):
        return self._flat.size

    def arch(self):
        return {"kind": "mlp", "input_dim": self.input_dim,
                "hidden_widths": list(self.hidden_widths), "n_classes": self.n_classes}

    def parameters(self):
        return list(self._leaves)

    # -- forward -------------------------------------------------------
    def __call__(self, x, track_params=True):
        """Logits as a graph node. With ``track_params=False`` the
        parameters enter as constants (used by attacks, which only need
        input gradients)."""
        h = as_tensor(x)
        if h.ndim != 2 or h.shape[1] != self.input_dim:
            raise LayoutError(f"expected input of shape [batch, {self.input_dim}], got {h.shape}")
        leaves = self._leaves if track_params else [Tensor(t.data) for t in self._leaves]
        n_layers = len(leaves) // 2
        for i in range(n_layers):
            h = matmul(h, leaves[2 * i]) + leaves[2 * i + 1]
            if i < n_layers - 1:
                h = h.relu()
        return h

    def logits(self, x):
        """Plain-array forward pass without graph bookkeeping."""
        h = np.asarray(x, dtype=np.float64)
        n_layers = len(self._leaves) // 2
        for i in range(n_layers):
            h = h @ self._leaves[2 * i].data + self._leaves[2 * i + 1].data
            if i < n_layers - 1:
                h = np.maximum(h, 0.0)
        return h

    def predict(self, x):
        return self.logits(x).argmax(axis=1)

    # -- parameters ----------------------------------------------------
    def get_params(self):
        return ParamVector(self._flat.copy(), self.layout)

    def set_params(self, p):
        values = p.values if isinstance(p, ParamVector) else np.asarray(p, dtype=np.float64)
        if isinstance(p, ParamVector) and p.layout != self.layout:
            raise LayoutError("parameter layout does not match the model")
        if values.shape != self._flat.shape:
            raise LayoutError(f"expected {self._flat.size} parameters, got {values.size}")
        self._flat[...] = values

    def params_view(self):
        """The live flat buffer (mutations change the model)."""
        return self._flat

    def zero_grad(self):
        for t in self._leaves:
            t.grad = None

    def flat_grad(self):
        out = np.zeros_like(self._flat)
        for s, t in zip(self.layout, self._leaves):
            if t.grad is not None:
                out[s.start:s.stop] = t.grad.ravel()
        return out


def build_mlp(input_dim, hidden_widths, n_classes, seed):
    """MLP with each layer's weights and biases drawn uniformly from
    [-1/sqrt(fan_in), 1/sqrt(fan_in)] by a generator derived from ``seed``."""
    model = MLP(input_dim, hidden_widths, n_classes)
    flat = model.params_view()
    for s in model.layout:
        fan_in = model.dims[int(s.name[5:s.name.index(".")])]
        bound = 1.0 / np.sqrt(fan_in)
        rng = generator(seed, "init", s.name)
        flat[s.start:s.stop] = rng.uniform(-bound, bound, size=s.size)
    return model


def get_params(model):
    return model.get_params()


def set_params(model, p):
    model.set_params(p)
