"""Epoch-end parameter interpolation (PIAT).

After every adversarial epoch the weights become
``lam * previous + (1 - lam) * current`` where ``previous`` is the
interpolated weights of the epoch before. The mixing weight either stays
fixed or follows ``g(n) = (n + 1) / (n + c)``, which starts small and tends
to one so later epochs lean more on history.
"""
from __future__ import annotations

import time
from dataclasses import dataclass
from typing import Literal

import numpy as np
from pydantic import model_validator

from . import _kernels as K
from ._spec import StrictModel
from .errors import LayoutError, NumericError
from .models import ParamVector

__all__ = ["LambdaSchedule", "PiatState", "interpolate", "lambda_at", "run_piat"]


class LambdaSchedule(StrictModel):
    kind: Literal["FIXED", "DYNAMIC"] = "DYNAMIC"
    value: float = 0.0
    c: float = 10.0
    # adversarial epoch number used for the first interpolation (1 follows
    # the loop counter of the training algorithm; 0 is the other reading)
    start_index: Literal[0, 1] = 1

    @model_validator(mode="after")
    def _check(self):
        if self.kind == "FIXED" and not 0.0 <= self.value <= 1.0:
            raise ValueError(f"fixed lambda must lie in [0, 1], got {self.value}")
        if self.kind == "DYNAMIC" and not self.c >= 1.0:
            raise ValueError(f"c must be >= 1, got {self.c}")
        return self


def lambda_at(sched, n):
    if n < 0:
        raise ValueError(f"epoch index must be >= 0, got {n}")
    if sched.kind == "FIXED":
        return float(sched.value)
    return (n + 1.0) / (n + sched.c)


def interpolate(theta_prev, theta_cur, lam):
    """``lam * theta_prev + (1 - lam) * theta_cur`` element-wise."""
    if not 0.0 <= lam <= 1.0:
        raise ValueError(f"lambda must lie in [0, 1], got {lam}")
    if isinstance(theta_prev, ParamVector) or isinstance(theta_cur, ParamVector):
        if not (isinstance(theta_prev, ParamVector) and isinstance(theta_cur, ParamVector)
                and theta_prev.layout == theta_cur.layout):
            raise LayoutError("interpolation needs two parameter vectors with the same layout")
        return ParamVector(K.interpolate(theta_prev.values, theta_cur.values, float(lam)),
                           theta_prev.layout)
    a = np.asarray(theta_prev, dtype=np.float64)
    b = np.asarray(theta_cur, dtype=np.float64)
    if a.shape != b.shape:
        raise LayoutError(f"shape mismatch: {a.shape} vs {b.shape}")
    return K.interpolate(a, b, float(lam))


@dataclass
class PiatState:
    theta_prev: ParamVector
    n: int = 0


def run_piat(model, dataset, plan, epoch_step=None, *, evaluator=None, optimizer=None,
             on_record=None, on_epoch_end=None):
    """Warm up on clean data, then alternate adversarial epochs with
    interpolation. Returns ``(final_params, records)``.

    ``epoch_step(model, dataset, plan, optimizer, epoch)`` trains one
    adversarial epoch in place and returns its mean loss; ``epoch`` is the
    0-based global epoch counter (warm-up included). ``evaluator(model)``
    returns ``(clean_acc, {attack_name: robust_acc})`` and runs on the
    post-interpolation weights. ``on_record`` receives each EpochRecord and
    ``on_epoch_end(epoch, model)`` fires after the weights are final for
    that epoch.
    """
    from .trainer import SGD, EpochRecord, adv_epoch, clean_epoch

    epoch_step = epoch_step or adv_epoch
    sched = plan.lambda_schedule
    if sched is None:
        raise ValueError("run_piat needs a lambda schedule in the plan")
    if optimizer is None:
        optimizer = SGD(model.n_params, plan.momentum, plan.weight_decay)
    records = []

    def emit(rec):
        records.append(rec)
        if on_record is not None:
            on_record(rec)

    for e in range(plan.warmup_epochs):
        t0 = time.perf_counter()
        loss = clean_epoch(model, dataset, plan, optimizer, e)
        emit(EpochRecord.build(e, "warmup", None, None, loss, evaluator, model, t0, plan))
        if on_epoch_end is not None:
            on_epoch_end(e, model)

    state = PiatState(model.get_params(), 0)
    for i in range(1, plan.adv_epochs + 1):
        e = plan.warmup_epochs + i - 1
        t0 = time.perf_counter()
        model.set_params(state.theta_prev)
        if plan.momentum_policy == "reset":
            optimizer.reset()
        loss = epoch_step(model, dataset, plan, optimizer, e)
        lam = lambda_at(sched, i - 1 + sched.start_index)
        merged = interpolate(state.theta_prev, model.get_params(), lam)
        if not np.all(np.isfinite(merged.values)):
            raise NumericError("non-finite parameters after interpolation", epoch=e + 1)
        model.set_params(merged)
        state = PiatState(merged, state.n + 1)
        emit(EpochRecord.build(e, "adv", i, lam, loss, evaluator, model, t0, plan))
        if on_epoch_end is not None:
            on_epoch_end(e, model)
    return state.theta_prev, records
