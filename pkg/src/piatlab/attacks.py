"""L-infinity gradient attacks: FGSM, PGD, MIM and PGD on the CW margin.

Attack objectives are summed over the batch so each example's step does not
depend on how many other examples share its batch. All outputs satisfy
``|x_adv - x|_inf <= epsilon`` and ``0 <= x_adv <= 1`` exactly.
"""
from __future__ import annotations

from typing import Literal

import numpy as np
from pydantic import model_validator

from . import _kernels as K
from ._spec import StrictModel
from .errors import NumericError
from .seeding import derive_seed, generator
from .tensor import Tensor, cross_entropy, cw_margin_loss, grad, kl_divergence

__all__ = [
    "AttackSpec",
    "LOSS_SELECTORS",
    "adversarial_examples",
    "evaluate_robust",
    "fgsm",
    "input_gradient",
    "pgd",
    "project",
]

LOSS_SELECTORS = ("ce", "kl", "cw")


class AttackSpec(StrictModel):
    family: Literal["FGSM", "PGD", "MIM", "CW_PGD"] = "PGD"
    epsilon: float = 8 / 255
    step_size: float = 2 / 255
    steps: int = 10
    random_start: bool = False
    mim_decay: float = 1.0
    mim_l1_normalize: bool = True
    cw_margin: float = 0.0

    @model_validator(mode="after")
    def _check(self):
        # epsilon == 0 is accepted so a zero-budget attack can stand in for clean training
        if not 0.0 <= self.epsilon <= 1.0:
            raise ValueError(f"epsilon must lie in [0, 1], got {self.epsilon}")
        if self.step_size <= 0.0 and self.epsilon > 0.0:
            raise ValueError(f"step_size must be > 0, got {self.step_size}")
        if self.steps < 1:
            raise ValueError(f"steps must be >= 1, got {self.steps}")
        if self.family == "FGSM" and (self.steps != 1 or self.step_size != self.epsilon):
            raise ValueError("FGSM requires steps == 1 and step_size == epsilon")
        if self.mim_decay < 0.0:
            raise ValueError(f"mim_decay must be >= 0, got {self.mim_decay}")
        if self.cw_margin < 0.0:
            raise ValueError(f"cw_margin must be >= 0, got {self.cw_margin}")
        return self

    @classmethod
    def fgsm(cls, epsilon):
        return cls(family="FGSM", epsilon=epsilon, step_size=epsilon, steps=1)

    @property
    def name(self):
        if self.family == "FGSM":
            return "FGSM"
        return f"{self.family}-{self.steps}"


def project(x_adv, x, epsilon):
    """Clamp ``x_adv`` into [x - eps, x + eps] intersected with [0, 1]."""
    return K.project_linf(np.asarray(x_adv, dtype=np.float64), np.asarray(x, dtype=np.float64),
                          float(epsilon))


def input_gradient(model, x_adv, y, loss="ce", x_clean=None, kappa=0.0):
    """Gradient of the summed attack objective w.r.t. the input batch."""
    xt = Tensor(x_adv, requires_grad=True)
    logits = model(xt, track_params=False)
    if loss == "ce":
        obj = cross_entropy(logits, y, reduction="sum")
    elif loss == "kl":
        if x_clean is None:
            raise ValueError("the KL attack objective needs the clean input")
        clean = Tensor(model.logits(x_clean))
        obj = kl_divergence(clean, logits, reduction="sum")
    elif loss == "cw":
        obj = cw_margin_loss(logits, y, kappa=kappa, reduction="sum")
    else:
        raise ValueError(f"unknown attack loss {loss!r}; expected one of {LOSS_SELECTORS}")
    (g,) = grad(obj, [xt])
    return g


def fgsm(model, x, y, epsilon, loss="ce"):
    """Single signed-gradient step of size epsilon from the clean input."""
    x = np.asarray(x, dtype=np.float64)
    g = input_gradient(model, x, y, loss, x_clean=x)
    if not np.all(np.isfinite(g)):
        raise NumericError("non-finite input gradient", iteration=0)
    return project(x + epsilon * np.sign(g), x, epsilon)


def pgd(model, x, y, spec, loss="ce", seed=0):
    """Run the attack described by ``spec`` and return the adversarial batch.

    ``loss`` picks the objective for FGSM/PGD/MIM ("ce", "kl" or "cw");
    CW_PGD always ascends the CW margin. MIM steps along the decayed sum of
    per-example L1-normalised gradients.
    """
    x = np.asarray(x, dtype=np.float64)
    eps, alpha = float(spec.epsilon), float(spec.step_size)
    if spec.family == "CW_PGD":
        loss = "cw"
    if spec.random_start:
        noise = generator(seed, "random_start").uniform(-eps, eps, size=x.shape)
        x_adv = project(x + noise, x, eps)
    else:
        x_adv = x.copy()
    velocity = np.zeros_like(x) if spec.family == "MIM" else None
    for t in range(spec.steps):
        g = input_gradient(model, x_adv, y, loss, x_clean=x, kappa=spec.cw_margin)
        if not np.all(np.isfinite(g)):
            raise NumericError("non-finite input gradient", iteration=t)
        if velocity is not None:
            if spec.mim_l1_normalize:
                l1 = np.abs(g).reshape(g.shape[0], -1).sum(axis=1).reshape((-1,) + (1,) * (g.ndim - 1))
                g = np.divide(g, l1, out=np.zeros_like(g), where=l1 > 0.0)
            velocity = spec.mim_decay * velocity + g
            g = velocity
        x_adv = K.linf_step(x_adv, x, g, alpha, eps)
    return x_adv


def adversarial_examples(model, dataset, spec, seed=0, loss="ce", batch_size=512):
    """Attack a whole dataset batch by batch; batch ``b`` uses a seed derived
    from ``(seed, b)``."""
    out = np.empty_like(dataset.inputs)
    n = len(dataset)
    for b, start in enumerate(range(0, n, batch_size)):
        sl = slice(start, start + batch_size)
        out[sl] = pgd(model, dataset.inputs[sl], dataset.labels[sl], spec, loss=loss,
                      seed=derive_seed(seed, "eval_batch", b))
    return out


def evaluate_robust(model, dataset, spec, seed=0, loss="ce", batch_size=512):
    """Fraction of examples classified correctly both clean and under attack."""
    if len(dataset) == 0:
        raise ValueError("cannot evaluate on an empty dataset")
    x_adv = adversarial_examples(model, dataset, spec, seed=seed, loss=loss, batch_size=batch_size)
    y = dataset.labels
    ok = (model.predict(dataset.inputs) == y) & (model.predict(x_adv) == y)
    return float(ok.mean())
