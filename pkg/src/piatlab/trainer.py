"""SGD training engine: schedules, per-epoch steps, evaluation, records."""
from __future__ import annotations

import json
import time
from dataclasses import dataclass, field
from typing import Literal, Optional

import numpy as np
from pydantic import model_validator

from . import _kernels as K
from ._spec import StrictModel
from .attacks import AttackSpec, evaluate_robust, pgd
from .data import iterate_minibatches
from .errors import LayoutError, NumericError
from .losses import LossSpec, training_loss
from .piat import LambdaSchedule
from .seeding import derive_seed
from .tensor import cross_entropy

__all__ = [
    "EpochRecord",
    "Evaluator",
    "LRSchedule",
    "SGD",
    "TrainPlan",
    "adv_epoch",
    "clean_epoch",
    "epoch_seed",
    "evaluate",
    "lr_at",
    "mean_loss",
    "sgd_step",
    "train_standard",
]


class LRSchedule(StrictModel):
    """Constant ``initial`` until ``decay_start``, then piecewise-linear
    through ``(milestones[k], targets[k])``, constant after the last one."""

    initial: float = 0.01
    decay_start: int = 15
    milestones: tuple[int, ...] = (22, 30)
    targets: tuple[float, ...] = (0.001, 0.0001)

    @model_validator(mode="after")
    def _check(self):
        if self.initial <= 0 or any(t <= 0 for t in self.targets):
            raise ValueError("learning rates must be > 0")
        if len(self.milestones) != len(self.targets):
            raise ValueError("milestones and targets must have the same length")
        knots = (self.decay_start, *self.milestones)
        if any(b <= a for a, b in zip(knots, knots[1:])) or self.decay_start < 0:
            raise ValueError("decay_start and milestones must be non-negative and strictly increasing")
        return self


def lr_at(plan, epoch):
    sched = plan.lr_schedule if isinstance(plan, TrainPlan) else plan
    if epoch < 0:
        raise ValueError(f"epoch must be >= 0, got {epoch}")
    e0, v0 = sched.decay_start, sched.initial
    if epoch <= e0:
        return float(v0)
    for e1, v1 in zip(sched.milestones, sched.targets):
        if epoch <= e1:
            return float(v0 + (v1 - v0) * (epoch - e0) / (e1 - e0))
        e0, v0 = e1, v1
    return float(v0)


class TrainPlan(StrictModel):
    warmup_epochs: int = 3
    adv_epochs: int = 30
    batch_size: int = 64
    lr_schedule: LRSchedule = LRSchedule()
    momentum: float = 0.9
    weight_decay: float = 5e-4
    momentum_policy: Literal["persist", "reset"] = "persist"
    attack: AttackSpec = AttackSpec(random_start=True)
    loss: LossSpec = LossSpec()
    # None trains without interpolation (the plain AT baseline)
    lambda_schedule: Optional[LambdaSchedule] = LambdaSchedule()
    seed: int = 0

    @model_validator(mode="after")
    def _check(self):
        if self.warmup_epochs < 0:
            raise ValueError("warmup_epochs must be >= 0")
        if self.adv_epochs < 0:
            raise ValueError("adv_epochs must be >= 0")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if not 0.0 <= self.momentum < 1.0:
            raise ValueError("momentum must lie in [0, 1)")
        if self.weight_decay < 0:
            raise ValueError("weight_decay must be >= 0")
        return self


def epoch_seed(master_seed, epoch):
    return derive_seed(master_seed, "epoch", epoch)


def sgd_step(params, grads, velocity, lr, momentum, weight_decay):
    """One momentum SGD update; returns new ``(params, velocity)``.

    v <- momentum * v + grads + weight_decay * params;  params <- params - lr * v
    """
    params = np.array(params, dtype=np.float64)
    velocity = np.array(velocity, dtype=np.float64)
    grads = np.asarray(grads, dtype=np.float64)
    if not (params.shape == grads.shape == velocity.shape) or params.ndim != 1:
        raise LayoutError(f"sgd_step shape mismatch: {params.shape}, {grads.shape}, {velocity.shape}")
    K.sgd_update(params, grads, velocity, lr, momentum, weight_decay)
    return params, velocity


class SGD:
    """Momentum SGD holding its velocity buffer; updates the model in place."""

    def __init__(self, n_params, momentum=0.9, weight_decay=0.0):
        self.momentum = float(momentum)
        self.weight_decay = float(weight_decay)
        self.velocity = np.zeros(n_params)

    def reset(self):
        self.velocity[:] = 0.0

    def step(self, model, lr):
        K.sgd_update(model.params_view(), model.flat_grad(), self.velocity, float(lr),
                     self.momentum, self.weight_decay)


def _run_batches(model, dataset, plan, optimizer, epoch, make_loss):
    seed = epoch_seed(plan.seed, epoch)
    lr = lr_at(plan, epoch)
    total, count = 0.0, 0
    for b, idx in enumerate(iterate_minibatches(len(dataset), plan.batch_size, seed)):
        x, y = dataset.inputs[idx], dataset.labels[idx]
        model.zero_grad()
        loss = make_loss(x, y, derive_seed(seed, "attack", b))
        value = loss.item()
        if not np.isfinite(value):
            raise NumericError("non-finite training loss", epoch=epoch + 1, batch=b)
        loss.backward()
        optimizer.step(model, lr)
        total += value * len(idx)
        count += len(idx)
    return total / count


def clean_epoch(model, dataset, plan, optimizer, epoch):
    """One epoch of standard cross-entropy training on clean inputs."""
    return _run_batches(model, dataset, plan, optimizer, epoch,
                        lambda x, y, _seed: cross_entropy(model(x), y))


def adv_epoch(model, dataset, plan, optimizer, epoch):
    """One adversarial-training epoch with ``plan.attack`` and ``plan.loss``."""

    def make_loss(x, y, seed):
        x_adv = pgd(model, x, y, plan.attack, loss=plan.loss.attack_loss, seed=seed)
        return training_loss(plan.loss, model, x, x_adv, y)

    return _run_batches(model, dataset, plan, optimizer, epoch, make_loss)


def evaluate(model, dataset, specs=(), seed=0, batch_size=512):
    """Clean accuracy plus robust accuracy for every attack in ``specs``."""
    if len(dataset) == 0:
        raise ValueError("cannot evaluate on an empty dataset")
    clean = float((model.predict(dataset.inputs) == dataset.labels).mean())
    robust = {s.name: evaluate_robust(model, dataset, s, seed=seed, batch_size=batch_size)
              for s in specs}
    return clean, robust


def mean_loss(model, dataset, mode="clean", attack=None, seed=0, batch_size=512):
    """Mean cross entropy over ``dataset``, on clean inputs or on adversarial
    inputs regenerated with ``attack`` (``mode="adv"``)."""
    from .attacks import adversarial_examples

    x = dataset.inputs
    if mode == "adv":
        if attack is None:
            raise ValueError("adversarial loss needs an attack spec")
        x = adversarial_examples(model, dataset, attack, seed=seed, batch_size=batch_size)
    elif mode != "clean":
        raise ValueError(f"unknown loss mode {mode!r}")
    return cross_entropy(model.logits(x), dataset.labels).item()


@dataclass
class Evaluator:
    dataset: object
    attacks: tuple = ()
    seed: int = 0
    batch_size: int = 512

    def __call__(self, model):
        return evaluate(model, self.dataset, self.attacks, self.seed, self.batch_size)


@dataclass
class EpochRecord:
    """Metrics for one epoch. ``epoch`` counts from 1 over warm-up and
    adversarial epochs together; ``adv_epoch`` counts adversarial epochs only."""

    epoch: int
    phase: str
    adv_epoch: Optional[int]
    lam: Optional[float]
    lr: float
    train_loss: float
    clean_acc: Optional[float] = None
    robust_acc: dict = field(default_factory=dict)
    wall_seconds: float = 0.0

    @classmethod
    def build(cls, epoch, phase, adv_index, lam, loss, evaluator, model, t0, plan):
        clean, robust = (None, {}) if evaluator is None else evaluator(model)
        return cls(epoch + 1, phase, adv_index, lam, lr_at(plan, epoch), loss, clean, robust,
                   time.perf_counter() - t0)

    def to_dict(self, timing=False):
        d = {"epoch": self.epoch, "phase": self.phase, "adv_epoch": self.adv_epoch,
             "lambda": self.lam, "lr": self.lr, "train_loss": self.train_loss,
             "clean_acc": self.clean_acc, "robust_acc": dict(self.robust_acc)}
        if timing:
            d["wall_seconds"] = self.wall_seconds
        return d

    def to_json(self, timing=False):
        return json.dumps(self.to_dict(timing), sort_keys=True)

    @classmethod
    def from_dict(cls, d):
        return cls(d["epoch"], d["phase"], d.get("adv_epoch"), d.get("lambda"), d["lr"],
                   d["train_loss"], d.get("clean_acc"), dict(d.get("robust_acc") or {}),
                   d.get("wall_seconds", 0.0))


def train_standard(model, dataset, plan, *, evaluator=None, optimizer=None, on_record=None,
                   on_epoch_end=None):
    """Warm-up plus adversarial training without interpolation.

    Same seeds and epoch numbering as :func:`piatlab.piat.run_piat`, so the
    two agree bit-for-bit when the interpolation weight is fixed at 0.
    """
    if optimizer is None:
        optimizer = SGD(model.n_params, plan.momentum, plan.weight_decay)
    records = []
    for e in range(plan.warmup_epochs + plan.adv_epochs):
        t0 = time.perf_counter()
        if e < plan.warmup_epochs:
            loss = clean_epoch(model, dataset, plan, optimizer, e)
            rec = EpochRecord.build(e, "warmup", None, None, loss, evaluator, model, t0, plan)
        else:
            loss = adv_epoch(model, dataset, plan, optimizer, e)
            if not np.all(np.isfinite(model.params_view())):
                raise NumericError("non-finite parameters", epoch=e + 1)
            rec = EpochRecord.build(e, "adv", e - plan.warmup_epochs + 1, None, loss,
                                    evaluator, model, t0, plan)
        records.append(rec)
        if on_record is not None:
            on_record(rec)
        if on_epoch_end is not None:
            on_epoch_end(e, model)
    return model.get_params(), records
