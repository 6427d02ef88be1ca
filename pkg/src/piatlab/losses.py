"""Adversarial training objectives.

* ``AT_CE``: cross entropy on adversarial inputs (PGD-AT).
* ``TRADES``: clean cross entropy plus ``beta`` times KL(clean || adversarial).
* ``CE_PLUS_NMSE``: adversarial cross entropy plus ``mu`` times the NMSE
  alignment term between L2-normalised clean and adversarial logits.
"""
from __future__ import annotations

from typing import Literal

import numpy as np
from pydantic import model_validator

from ._spec import StrictModel
from .tensor import Tensor, as_tensor, cross_entropy, kl_divergence, l2_normalize

__all__ = [
    "LossSpec",
    "at_ce_loss",
    "nmse_from_logits",
    "nmse_loss",
    "total_loss",
    "trades_loss",
    "training_loss",
]


class LossSpec(StrictModel):
    kind: Literal["AT_CE", "TRADES", "CE_PLUS_NMSE"] = "AT_CE"
    beta: float = 6.0
    mu: float = 5.0

    @model_validator(mode="after")
    def _check(self):
        if self.kind == "TRADES" and not self.beta > 0:
            raise ValueError(f"TRADES needs beta > 0, got {self.beta}")
        if self.kind == "CE_PLUS_NMSE" and not self.mu >= 0:
            raise ValueError(f"CE_PLUS_NMSE needs mu >= 0, got {self.mu}")
        return self

    @property
    def attack_loss(self):
        """Objective the training attack should ascend for this loss."""
        return "kl" if self.kind == "TRADES" else "ce"


def at_ce_loss(model, x_adv, y):
    return cross_entropy(model(x_adv), y)


def trades_loss(model, x, x_adv, y, beta):
    clean = model(x)
    return cross_entropy(clean, y) + beta * kl_divergence(clean, model(x_adv))


def clean_confidence(clean_logits, y):
    """Softmax probability of the true class, as a plain array."""
    z = np.asarray(clean_logits, dtype=np.float64)
    z = z - z.max(axis=1, keepdims=True)
    p = np.exp(z)
    p /= p.sum(axis=1, keepdims=True)
    return p[np.arange(z.shape[0]), np.asarray(y)]


def nmse_from_logits(clean_logits, adv_logits, y=None, p_clean=None):
    """Batch mean of (1 - p_clean) * |clean/|clean| - adv/|adv||^2.

    ``p_clean`` defaults to the true-class softmax probability of the clean
    logits and is never differentiated through.
    """
    clean_logits, adv_logits = as_tensor(clean_logits), as_tensor(adv_logits)
    if p_clean is None:
        if y is None:
            raise ValueError("need labels or an explicit p_clean")
        p_clean = clean_confidence(clean_logits.data, y)
    weight = Tensor(1.0 - np.asarray(p_clean, dtype=np.float64))
    diff = l2_normalize(clean_logits) - l2_normalize(adv_logits)
    return (weight * diff.square().sum(axis=1)).mean()


def nmse_loss(model, x, x_adv, y, p_clean=None):
    return nmse_from_logits(model(x), model(x_adv), y, p_clean=p_clean)


def total_loss(model, x, x_adv, y, mu, p_clean=None):
    if mu < 0:
        raise ValueError(f"mu must be >= 0, got {mu}")
    adv = model(x_adv)
    ce = cross_entropy(adv, y)
    if mu == 0:
        return ce
    return ce + mu * nmse_from_logits(model(x), adv, y, p_clean=p_clean)


def training_loss(spec, model, x, x_adv, y):
    """The objective selected by ``spec`` for one minibatch."""
    if spec.kind == "AT_CE":
        return at_ce_loss(model, x_adv, y)
    if spec.kind == "TRADES":
        return trades_loss(model, x, x_adv, y, spec.beta)
    return total_loss(model, x, x_adv, y, spec.mu)
