import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from pydantic import ValidationError

from conftest import central_diff, rel_err
from piatlab.errors import DegenerateLogitsError
from piatlab.losses import (
    LossSpec,
    at_ce_loss,
    clean_confidence,
    nmse_from_logits,
    total_loss,
    trades_loss,
    training_loss,
)
from piatlab.models import build_mlp
from piatlab.tensor import cross_entropy, kl_divergence


@pytest.fixture
def batch(rng):
    x = rng.uniform(size=(8, 2))
    x_adv = np.clip(x + rng.uniform(-0.1, 0.1, x.shape), 0, 1)
    return x, x_adv, rng.integers(0, 2, 8)


def test_nmse_worked_example():
    value = nmse_from_logits([[1.0, 0.0]], [[0.0, 1.0]], y=[0]).item()
    assert abs(value - 2 / (math.e + 1)) < 1e-10
    assert clean_confidence([[1.0, 0.0]], [0])[0] == pytest.approx(math.e / (math.e + 1), abs=1e-15)


def test_nmse_zero_on_identical_and_scaled_logits(rng):
    z = rng.standard_normal((5, 3))
    y = rng.integers(0, 3, 5)
    assert nmse_from_logits(z, z, y).item() <= 1e-12
    assert nmse_from_logits(z, 2 * z, y).item() <= 1e-12


@settings(max_examples=200, deadline=None)
@given(st.integers(0, 2**31), st.floats(1e-3, 1e3), st.floats(1e-3, 1e3))
def test_nmse_scale_invariance_at_fixed_confidence(seed, a, b):
    r = np.random.default_rng(seed)
    z, za = r.standard_normal((4, 3)), r.standard_normal((4, 3))
    y = r.integers(0, 3, 4)
    p = clean_confidence(z, y)
    ref = nmse_from_logits(z, za, p_clean=p).item()
    assert abs(nmse_from_logits(a * z, b * za, p_clean=p).item() - ref) <= 1e-10


@settings(max_examples=200, deadline=None)
@given(st.integers(0, 2**31), st.floats(0.01, 100))
def test_nmse_is_bounded(seed, scale):
    r = np.random.default_rng(seed)
    z, za = r.standard_normal((6, 4)) * scale, r.standard_normal((6, 4)) * scale
    value = nmse_from_logits(z, za, y=r.integers(0, 4, 6)).item()
    assert 0.0 <= value <= 4.0


def test_nmse_rejects_zero_logits():
    with pytest.raises(DegenerateLogitsError):
        nmse_from_logits([[0.0, 0.0]], [[1.0, 0.0]], y=[0])


def test_loss_spec_validation():
    with pytest.raises(ValidationError):
        LossSpec(kind="TRADES", beta=0.0)
    with pytest.raises(ValidationError):
        LossSpec(kind="CE_PLUS_NMSE", mu=-1.0)
    assert LossSpec(kind="TRADES").attack_loss == "kl"
    assert LossSpec(kind="CE_PLUS_NMSE").attack_loss == "ce"


def test_at_ce_is_cross_entropy_composition(batch):
    x, x_adv, y = batch
    m = build_mlp(2, [8], 2, 0)
    assert at_ce_loss(m, x_adv, y).item() == cross_entropy(m.logits(x_adv), y).item()


def test_trades_reduces_to_clean_ce(batch):
    x, x_adv, y = batch
    m = build_mlp(2, [8], 2, 0)
    clean = cross_entropy(m.logits(x), y).item()
    assert trades_loss(m, x, x, y, 6.0).item() == pytest.approx(clean, abs=1e-12)
    assert trades_loss(m, x, x_adv, y, 6.0).item() >= clean - 1e-12
    kl = kl_divergence(m.logits(x), m.logits(x_adv)).item()
    small = trades_loss(m, x, x_adv, y, 1e-9).item()
    assert abs(small - clean) <= 1e-9 * kl + 1e-12


def test_total_loss_mu_zero_is_at_ce_bitwise(batch):
    x, x_adv, y = batch
    m = build_mlp(2, [8], 2, 0)
    assert total_loss(m, x, x_adv, y, 0.0).item() == at_ce_loss(m, x_adv, y).item()


def _param_fd(model, make_loss):
    """Analytic vs central-difference parameter gradient for ``make_loss()``."""
    model.zero_grad()
    make_loss().backward()
    analytic = model.flat_grad()
    base = model.get_params().values.copy()

    def f(v):
        model.set_params(v)
        return make_loss().item()

    numeric = central_diff(f, base)
    model.set_params(base)
    return rel_err(analytic, numeric)


def test_gradient_fidelity_all_losses(batch):
    x, x_adv, y = batch
    m = build_mlp(2, [16, 16], 2, 11)
    p_fixed = clean_confidence(m.logits(x), y)
    assert _param_fd(m, lambda: at_ce_loss(m, x_adv, y)) < 1e-4
    assert _param_fd(m, lambda: trades_loss(m, x, x_adv, y, 6.0)) < 1e-4
    # the confidence weight is a constant for differentiation, so hold it fixed
    assert _param_fd(m, lambda: total_loss(m, x, x_adv, y, 5.0, p_clean=p_fixed)) < 1e-4


def test_confidence_weight_is_not_differentiated(batch):
    x, x_adv, y = batch
    m = build_mlp(2, [8], 2, 3)
    m.zero_grad()
    total_loss(m, x, x_adv, y, 5.0).backward()
    g_default = m.flat_grad()
    m.zero_grad()
    total_loss(m, x, x_adv, y, 5.0, p_clean=clean_confidence(m.logits(x), y)).backward()
    assert np.array_equal(g_default, m.flat_grad())


def test_training_loss_dispatch(batch):
    x, x_adv, y = batch
    m = build_mlp(2, [8], 2, 0)
    assert training_loss(LossSpec(kind="AT_CE"), m, x, x_adv, y).item() == at_ce_loss(m, x_adv, y).item()
    assert (training_loss(LossSpec(kind="TRADES", beta=2.0), m, x, x_adv, y).item()
            == trades_loss(m, x, x_adv, y, 2.0).item())
    assert (training_loss(LossSpec(kind="CE_PLUS_NMSE", mu=3.0), m, x, x_adv, y).item()
            == total_loss(m, x, x_adv, y, 3.0).item())
