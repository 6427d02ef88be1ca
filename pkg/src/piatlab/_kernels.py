"""Elementwise hot kernels with a numba path and a pure-numpy fallback.

The backend is chosen once at import time. Set ``PIATLAB_NUMBA=0`` to force
the numpy path (numba is also skipped silently when it is not importable).
Both paths compute the same float64 expressions; they are not guaranteed to
agree to the last ulp where transcendental functions are involved, so runs
are reproducible bit-for-bit only within one backend.
"""
from __future__ import annotations

import os

import numpy as np

try:
    from numba import njit
except ImportError:  # pragma: no cover - numba is a declared dependency
    njit = None

__all__ = [
    "BACKEND",
    "NUMPY_KERNELS",
    "NUMBA_KERNELS",
    "interpolate",
    "linf_step",
    "log_softmax_rows",
    "project_linf",
    "relu",
    "relu_backward",
    "sgd_update",
]


# --- pure numpy -----------------------------------------------------------

def _np_log_softmax_rows(z):
    shifted = z - z.max(axis=1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))


def _np_relu(z):
    return np.maximum(z, 0.0)


def _np_relu_backward(z, g):
    return np.where(z > 0.0, g, 0.0)


def _np_project_linf(x_adv, x, eps):
    lo = np.maximum(x - eps, 0.0)
    hi = np.minimum(x + eps, 1.0)
    return np.minimum(np.maximum(x_adv, lo), hi)


def _np_linf_step(x_adv, x, direction, alpha, eps):
    return _np_project_linf(x_adv + alpha * np.sign(direction), x, eps)


def _np_interpolate(prev, cur, lam):
    return lam * prev + (1.0 - lam) * cur


def _np_sgd_update(params, grads, velocity, lr, momentum, weight_decay):
    velocity *= momentum
    velocity += grads
    if weight_decay != 0.0:
        velocity += weight_decay * params
    params -= lr * velocity


# --- loop kernels (compiled with numba when enabled) ------------------------

def _loop_log_softmax_rows(z):
    n, c = z.shape
    out = np.empty_like(z)
    for i in range(n):
        m = z[i, 0]
        for j in range(1, c):
            if z[i, j] > m:
                m = z[i, j]
        s = 0.0
        for j in range(c):
            s += np.exp(z[i, j] - m)
        ls = np.log(s)
        for j in range(c):
            out[i, j] = (z[i, j] - m) - ls
    return out


def _loop_relu_1d(z):
    out = np.empty_like(z)
    for i in range(z.size):
        v = z[i]
        # NaN propagates, as with np.maximum(z, 0.0)
        out[i] = v if (v > 0.0 or v != v) else 0.0
    return out


def _loop_relu_backward_1d(z, g):
    out = np.empty_like(g)
    for i in range(z.size):
        out[i] = g[i] if z[i] > 0.0 else 0.0
    return out


def _loop_project_1d(x_adv, x, eps):
    out = np.empty_like(x_adv)
    for i in range(x_adv.size):
        lo = x[i] - eps
        if lo < 0.0:
            lo = 0.0
        hi = x[i] + eps
        if hi > 1.0:
            hi = 1.0
        v = x_adv[i]
        if v < lo:
            v = lo
        if v > hi:
            v = hi
        out[i] = v
    return out


def _loop_step_1d(x_adv, x, direction, alpha, eps):
    out = np.empty_like(x_adv)
    for i in range(x_adv.size):
        d = direction[i]
        s = 1.0 if d > 0.0 else (-1.0 if d < 0.0 else 0.0)
        v = x_adv[i] + alpha * s
        lo = x[i] - eps
        if lo < 0.0:
            lo = 0.0
        hi = x[i] + eps
        if hi > 1.0:
            hi = 1.0
        if v < lo:
            v = lo
        if v > hi:
            v = hi
        out[i] = v
    return out


def _loop_interpolate_1d(prev, cur, lam):
    out = np.empty_like(prev)
    mu = 1.0 - lam
    for i in range(prev.size):
        out[i] = lam * prev[i] + mu * cur[i]
    return out


def _loop_sgd_update_1d(params, grads, velocity, lr, momentum, weight_decay):
    for i in range(params.size):
        v = momentum * velocity[i] + grads[i]
        if weight_decay != 0.0:
            v = v + weight_decay * params[i]
        velocity[i] = v
        params[i] -= lr * v


def _wrap_flat(kernels):
    """Adapt 1-D loop kernels to arbitrary-shape contiguous arrays."""
    step_1d = kernels["step_1d"]
    project_1d = kernels["project_1d"]
    interp_1d = kernels["interpolate_1d"]
    sgd_1d = kernels["sgd_update_1d"]
    relu_1d = kernels["relu_1d"]
    relu_bwd_1d = kernels["relu_backward_1d"]

    def relu(z):
        return relu_1d(np.ascontiguousarray(z).ravel()).reshape(z.shape)

    def relu_backward(z, g):
        out = relu_bwd_1d(np.ascontiguousarray(z).ravel(), np.ascontiguousarray(g).ravel())
        return out.reshape(g.shape)

    def linf_step(x_adv, x, direction, alpha, eps):
        out = step_1d(np.ascontiguousarray(x_adv).ravel(), np.ascontiguousarray(x).ravel(),
                      np.ascontiguousarray(direction).ravel(), float(alpha), float(eps))
        return out.reshape(x_adv.shape)

    def project_linf(x_adv, x, eps):
        out = project_1d(np.ascontiguousarray(x_adv).ravel(), np.ascontiguousarray(x).ravel(), float(eps))
        return out.reshape(x_adv.shape)

    def interpolate(prev, cur, lam):
        out = interp_1d(np.ascontiguousarray(prev).ravel(), np.ascontiguousarray(cur).ravel(), float(lam))
        return out.reshape(prev.shape)

    def sgd_update(params, grads, velocity, lr, momentum, weight_decay):
        # params and velocity are updated in place; both must be contiguous 1-D
        sgd_1d(params, np.ascontiguousarray(grads).ravel(), velocity,
               float(lr), float(momentum), float(weight_decay))

    return {
        "log_softmax_rows": kernels["log_softmax_rows"],
        "relu": relu,
        "relu_backward": relu_backward,
        "project_linf": project_linf,
        "linf_step": linf_step,
        "interpolate": interpolate,
        "sgd_update": sgd_update,
    }


NUMPY_KERNELS = {
    "log_softmax_rows": _np_log_softmax_rows,
    "relu": _np_relu,
    "relu_backward": _np_relu_backward,
    "project_linf": _np_project_linf,
    "linf_step": _np_linf_step,
    "interpolate": _np_interpolate,
    "sgd_update": _np_sgd_update,
}

_LOOPS = {
    "log_softmax_rows": _loop_log_softmax_rows,
    "relu_1d": _loop_relu_1d,
    "relu_backward_1d": _loop_relu_backward_1d,
    "project_1d": _loop_project_1d,
    "step_1d": _loop_step_1d,
    "interpolate_1d": _loop_interpolate_1d,
    "sgd_update_1d": _loop_sgd_update_1d,
}

if njit is not None:
    NUMBA_KERNELS = _wrap_flat({name: njit(cache=True)(fn) for name, fn in _LOOPS.items()})
else:  # pragma: no cover
    NUMBA_KERNELS = None

_want_numba = os.environ.get("PIATLAB_NUMBA", "1").strip().lower() not in ("0", "false", "no", "off")

if _want_numba and NUMBA_KERNELS is not None:
    BACKEND = "numba"
    _active = NUMBA_KERNELS
else:
    BACKEND = "numpy"
    _active = NUMPY_KERNELS

log_softmax_rows = _active["log_softmax_rows"]
relu = _active["relu"]
relu_backward = _active["relu_backward"]
project_linf = _active["project_linf"]
linf_step = _active["linf_step"]
interpolate = _active["interpolate"]
sgd_update = _active["sgd_update"]
