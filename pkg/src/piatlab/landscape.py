"""Loss along a random 2-D slice of parameter space.

Each grid point evaluates ``L(theta + m1 * u/|u| + m2 * v/|v|)`` for
``m1, m2`` in [-1, 1], with ``u`` and ``v`` Gaussian directions normalised
over the whole flat parameter vector (not per filter).
"""
from __future__ import annotations

import csv
import hashlib
import io
import json
from dataclasses import dataclass, field

import numpy as np

from .models import ParamVector
from .seeding import generator
from .trainer import mean_loss

__all__ = ["LandscapeGrid", "probe", "sample_directions"]


def sample_directions(layout, seed):
    """Two independent standard-normal direction vectors (not normalised)."""
    n = layout[-1].stop
    u = generator(seed, "landscape", "u").standard_normal(n)
    v = generator(seed, "landscape", "v").standard_normal(n)
    return ParamVector(u, layout), ParamVector(v, layout)


@dataclass
class LandscapeGrid:
    m1: np.ndarray
    m2: np.ndarray
    loss: np.ndarray
    center_fingerprint: str
    meta: dict = field(default_factory=dict)

    def rows(self):
        for i, a in enumerate(self.m1):
            for j, b in enumerate(self.m2):
                yield float(a), float(b), float(self.loss[i, j])

    def to_csv(self):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["m1", "m2", "loss"])
        for a, b, v in self.rows():
            w.writerow([repr(a), repr(b), repr(v)])
        return buf.getvalue()

    def metadata(self):
        return {"grid_n": int(self.m1.size), "center_fingerprint": self.center_fingerprint,
                **self.meta}

    def write(self, csv_path, meta_path):
        with open(csv_path, "w", newline="") as fh:
            fh.write(self.to_csv())
        with open(meta_path, "w") as fh:
            json.dump(self.metadata(), fh, sort_keys=True, indent=2)
            fh.write("\n")


def _unit(p, name):
    values = p.values if isinstance(p, ParamVector) else np.asarray(p, dtype=np.float64)
    norm = float(np.linalg.norm(values))
    if not norm > 0.0 or not np.isfinite(norm):
        raise ValueError(f"direction {name} is degenerate (norm {norm})")
    return values / norm


def probe(model, dataset, u, v, grid_n=25, loss_selector="adv", *, attack=None, seed=0,
          batch_size=512):
    """Evaluate the loss on a ``grid_n x grid_n`` lattice over [-1, 1]^2.

    ``loss_selector`` is ``"clean"`` (cross entropy on clean inputs),
    ``"adv"`` (cross entropy on inputs re-attacked with ``attack`` at every
    grid point, same seed each time) or a callable ``f(model, dataset)``.
    The model's parameters are restored exactly before returning.
    """
    if grid_n < 2:
        raise ValueError(f"grid_n must be >= 2, got {grid_n}")
    u_hat, v_hat = _unit(u, "u"), _unit(v, "v")
    if callable(loss_selector):
        loss_fn, mode = loss_selector, getattr(loss_selector, "__name__", "custom")
    elif loss_selector in ("clean", "adv"):
        if loss_selector == "adv" and attack is None:
            raise ValueError("adversarial landscape needs an attack spec")
        mode = loss_selector

        def loss_fn(m, d):
            return mean_loss(m, d, mode, attack, seed=seed, batch_size=batch_size)
    else:
        raise ValueError(f"unknown loss selector {loss_selector!r}")

    center = model.get_params()
    # exact 0 at the centre for odd grid_n, exactly symmetric otherwise
    axis = (2.0 * np.arange(grid_n) - (grid_n - 1)) / (grid_n - 1)
    grid = np.empty((grid_n, grid_n))
    try:
        for i, a in enumerate(axis):
            for j, b in enumerate(axis):
                model.set_params(center.values + (a * u_hat + b * v_hat))
                grid[i, j] = loss_fn(model, dataset)
    finally:
        model.set_params(center)
    if not np.all(np.isfinite(grid)):
        raise FloatingPointError("landscape contains non-finite losses")
    meta = {"mode": mode, "seed": int(seed),
            "u_fingerprint": hashlib.sha256(u_hat.tobytes()).hexdigest()[:16],
            "v_fingerprint": hashlib.sha256(v_hat.tobytes()).hexdigest()[:16],
            "normalization": "global_l2"}
    if attack is not None and mode == "adv":
        meta["attack"] = attack.model_dump()
    return LandscapeGrid(axis, axis.copy(), grid, center.fingerprint(), meta)
