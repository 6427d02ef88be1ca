"""The numba kernels and the numpy fallback compute the same values."""
import os
import subprocess
import sys

import numpy as np
import pytest

from piatlab import _kernels as K

pytestmark = pytest.mark.skipif(K.NUMBA_KERNELS is None, reason="numba unavailable")


@pytest.fixture
def data(rng):
    x = rng.uniform(0, 1, (37, 3))
    return {
        "x": x,
        "x_adv": np.clip(x + rng.uniform(-0.3, 0.3, x.shape), 0, 1),
        "d": np.where(rng.uniform(size=x.shape) < 0.2, 0.0, rng.standard_normal(x.shape)),
        "z": rng.standard_normal((11, 5)) * 30,
        "h": np.where(rng.uniform(size=(6, 7)) < 0.2, 0.0, rng.standard_normal((6, 7))),
        "g": rng.standard_normal((6, 7)),
    }


def test_elementwise_kernels_agree_bitwise(data):
    a, b = K.NUMPY_KERNELS, K.NUMBA_KERNELS
    cases = {
        "relu": (data["h"],),
        "relu_backward": (data["h"], data["g"]),
        "project_linf": (data["x_adv"], data["x"], 0.1),
        "linf_step": (data["x_adv"], data["x"], data["d"], 0.05, 0.1),
        "interpolate": (data["h"], data["g"], 0.3),
    }
    for name, args in cases.items():
        assert np.array_equal(a[name](*args), b[name](*args)), name


def test_log_softmax_agrees(data):
    ref = K.NUMPY_KERNELS["log_softmax_rows"](data["z"])
    assert np.max(np.abs(K.NUMBA_KERNELS["log_softmax_rows"](data["z"]) - ref)) < 1e-12


def test_sgd_update_agrees(rng):
    p, g, v = rng.standard_normal(50), rng.standard_normal(50), rng.standard_normal(50)
    outs = []
    for table in (K.NUMPY_KERNELS, K.NUMBA_KERNELS):
        pp, vv = p.copy(), v.copy()
        table["sgd_update"](pp, g, vv, 0.1, 0.9, 5e-4)
        outs.append((pp, vv))
    assert np.array_equal(outs[0][0], outs[1][0])
    assert np.array_equal(outs[0][1], outs[1][1])


def test_kernels_preserve_shape(data):
    for table in (K.NUMPY_KERNELS, K.NUMBA_KERNELS):
        assert table["linf_step"](data["x_adv"], data["x"], data["d"], 0.05, 0.1).shape == (37, 3)
        assert table["relu_backward"](data["h"], data["g"]).shape == (6, 7)


@pytest.mark.parametrize("flag,expected", [("0", "numpy"), ("1", "numba")])
def test_env_flag_selects_backend(flag, expected):
    env = {**os.environ, "PIATLAB_NUMBA": flag}
    out = subprocess.run([sys.executable, "-c", "import piatlab; print(piatlab.BACKEND)"],
                         env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == expected


def test_relu_edge_values_agree():
    z = np.array([np.nan, -0.0, 0.0, -1.0, 2.0, np.inf, -np.inf])
    a, b = K.NUMPY_KERNELS["relu"](z), K.NUMBA_KERNELS["relu"](z)
    assert np.array_equal(a, b, equal_nan=True)
    assert np.array_equal(np.signbit(a), np.signbit(b))
