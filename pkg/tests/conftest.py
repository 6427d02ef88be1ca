import numpy as np
import pytest

from piatlab.data import make_blobs, make_two_moons


def central_diff(f, x, h=1e-5):
    """Central finite-difference gradient of scalar ``f`` at array ``x``."""
    x = np.array(x, dtype=np.float64)
    g = np.zeros_like(x)
    it = np.nditer(x, flags=["multi_index"])
    for _ in it:
        i = it.multi_index
        orig = x[i]
        x[i] = orig + h
        up = f(x)
        x[i] = orig - h
        down = f(x)
        x[i] = orig
        g[i] = (up - down) / (2 * h)
    return g


def rel_err(a, b):
    a, b = np.asarray(a), np.asarray(b)
    return float(np.linalg.norm(a - b) / max(np.linalg.norm(a), np.linalg.norm(b), 1e-12))


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def moons():
    return make_two_moons(200, 0.1, seed=5)


@pytest.fixture(scope="session")
def far_blobs():
    return make_blobs(100, [[0.2, 0.2], [0.8, 0.8]], spread_sd=0.05, seed=2)
