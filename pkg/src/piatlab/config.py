"""Run configuration: a strict, versioned JSON document.

Every section is validated before anything runs; unknown keys are errors.
See README.md for the full schema and the shipped presets.
"""
from __future__ import annotations

import json
from importlib import resources
from pathlib import Path
from typing import Annotated, Literal, Optional, Union

from pydantic import Field, ValidationError, model_validator

from ._spec import StrictModel
from .attacks import AttackSpec
from .data import Dataset, load_csv, load_idx, make_blobs, make_two_moons
from .errors import ConfigError
from .losses import LossSpec
from .piat import LambdaSchedule
from .seeding import derive_seed
from .trainer import LRSchedule, TrainPlan

SCHEMA_VERSION = 1
PRESETS = ("pgd_at", "trades", "piat", "piat_nmse", "piat_trades")

__all__ = ["PRESETS", "FULL_LENGTH_PLAN", "RunConfig", "build_datasets", "load_config", "preset_names"]


class TwoMoonsData(StrictModel):
    kind: Literal["two_moons"]
    n_train: int = 2000
    n_test: int = 1000
    noise_sd: float = 0.1
    seed: int = 0


class BlobsData(StrictModel):
    kind: Literal["blobs"]
    centers: tuple[tuple[float, ...], ...]
    spread_sd: float = 0.05
    n_train: int = 1000
    n_test: int = 500
    seed: int = 0


class IdxData(StrictModel):
    kind: Literal["idx"]
    train_images: str
    train_labels: str
    test_images: str
    test_labels: str
    limit_train: Optional[int] = None
    limit_test: Optional[int] = None
    n_classes: Optional[int] = None


class CsvData(StrictModel):
    kind: Literal["csv"]
    train: str
    test: str
    n_classes: Optional[int] = None


DataConfig = Annotated[Union[TwoMoonsData, BlobsData, IdxData, CsvData], Field(discriminator="kind")]


class ModelConfig(StrictModel):
    kind: Literal["mlp"] = "mlp"
    hidden_widths: tuple[int, ...] = (32, 32)

    @model_validator(mode="after")
    def _check(self):
        if any(w < 1 for w in self.hidden_widths):
            raise ValueError("hidden widths must be positive")
        return self


class EvalConfig(StrictModel):
    # None: PGD-20, PGD-100, MIM-20 and CW_PGD-20 at the training epsilon
    attacks: Optional[tuple[AttackSpec, ...]] = None
    # attack names evaluated after every epoch (None: all of them)
    per_epoch: Optional[tuple[str, ...]] = ("PGD-20",)
    batch_size: int = 512
    seed: Optional[int] = None


class OutputConfig(StrictModel):
    dir: str = "runs/default"
    snapshots: bool = False


class RunConfig(StrictModel):
    schema_version: Literal[1] = 1
    seed: int = 0
    dataset: DataConfig = TwoMoonsData(kind="two_moons")
    model: ModelConfig = ModelConfig()
    train: TrainPlan = TrainPlan()
    evaluation: EvalConfig = EvalConfig()
    output: OutputConfig = OutputConfig()

    @model_validator(mode="after")
    def _check(self):
        if "seed" in self.train.model_fields_set and self.train.seed != self.seed:
            raise ValueError("set the master seed at the top level, not in train")
        names = [a.name for a in self.eval_attacks()]
        if len(set(names)) != len(names):
            raise ValueError(f"evaluation attacks must have distinct names, got {names}")
        for n in self.evaluation.per_epoch or ():
            if n not in names:
                raise ValueError(f"per_epoch attack {n!r} is not among {names}")
        return self

    def plan(self):
        return self.train.model_copy(update={"seed": self.seed})

    def eval_seed(self):
        return self.seed if self.evaluation.seed is None else self.evaluation.seed

    def eval_attacks(self):
        if self.evaluation.attacks is not None:
            return tuple(self.evaluation.attacks)
        eps = self.train.attack.epsilon
        alpha = eps / 4 if eps > 0 else 1.0
        return (
            AttackSpec(family="PGD", epsilon=eps, step_size=alpha, steps=20),
            AttackSpec(family="PGD", epsilon=eps, step_size=alpha, steps=100),
            AttackSpec(family="MIM", epsilon=eps, step_size=alpha, steps=20),
            AttackSpec(family="CW_PGD", epsilon=eps, step_size=alpha, steps=20),
        )

    def epoch_attacks(self):
        attacks = self.eval_attacks()
        if self.evaluation.per_epoch is None:
            return attacks
        keep = set(self.evaluation.per_epoch)
        return tuple(a for a in attacks if a.name in keep)

    def resolved(self):
        """JSON-ready dict with every default materialised."""
        d = self.model_dump(mode="json")
        d["train"]["seed"] = self.seed
        d["evaluation"]["attacks"] = [a.model_dump(mode="json") for a in self.eval_attacks()]
        return d


# Full-length image-classification recipe (120 epochs, decay from epoch 60);
# far too slow for the desk-scale presets but kept for larger runs.
FULL_LENGTH_PLAN = TrainPlan(
    warmup_epochs=10,
    adv_epochs=110,
    batch_size=128,
    lr_schedule=LRSchedule(initial=0.01, decay_start=60, milestones=(90, 120), targets=(0.001, 0.0001)),
    momentum=0.9,
    weight_decay=3.5e-3,
    attack=AttackSpec(family="PGD", epsilon=8 / 255, step_size=2 / 255, steps=10, random_start=True),
    loss=LossSpec(kind="CE_PLUS_NMSE", mu=5.0, beta=6.0),
    lambda_schedule=LambdaSchedule(kind="DYNAMIC", c=10.0),
)


def _loc(loc):
    out = ""
    for part in loc:
        if isinstance(part, int):
            out += f"[{part}]"
        else:
            out += ("." if out else "") + str(part)
    return out


def _file_problems(cfg):
    ds = cfg.dataset
    fields = {"idx": ("train_images", "train_labels", "test_images", "test_labels"),
              "csv": ("train", "test")}.get(ds.kind, ())
    return [(f"dataset.{f}", f"file not found: {getattr(ds, f)}")
            for f in fields if not Path(getattr(ds, f)).is_file()]


def preset_names():
    return PRESETS


def preset_text(name):
    if name not in PRESETS:
        raise ConfigError([("", f"unknown preset {name!r}; available: {', '.join(PRESETS)}")])
    return resources.files("piatlab.presets").joinpath(f"{name}.json").read_text()


def parse_config(obj):
    """Validate a decoded JSON object; raise ConfigError listing every problem."""
    try:
        cfg = RunConfig.model_validate(obj)
    except ValidationError as exc:
        raise ConfigError([(_loc(e["loc"]), e["msg"]) for e in exc.errors()]) from None
    problems = _file_problems(cfg)
    if problems:
        raise ConfigError(problems)
    return cfg


def load_config(source, overrides=None):
    """Load a config from a JSON file path or ``preset:<name>``.

    ``overrides`` maps dotted keys (``"seed"``, ``"output.dir"``) to values
    applied before validation.
    """
    source = str(source)
    if source.startswith("preset:"):
        text = preset_text(source.split(":", 1)[1])
    else:
        path = Path(source)
        if not path.is_file():
            raise ConfigError([("", f"config file not found: {source}")])
        text = path.read_text()
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError([("", f"not valid JSON: {exc}")]) from None
    if not isinstance(obj, dict):
        raise ConfigError([("", "config must be a JSON object")])
    for key, value in (overrides or {}).items():
        node = obj
        *parents, leaf = key.split(".")
        for p in parents:
            node = node.setdefault(p, {})
        node[leaf] = value
    return parse_config(obj)


def build_datasets(cfg):
    """``(train, test)`` datasets described by ``cfg.dataset``."""
    ds = cfg.dataset
    if ds.kind == "two_moons":
        return (make_two_moons(ds.n_train, ds.noise_sd, derive_seed(ds.seed, "train")),
                make_two_moons(ds.n_test, ds.noise_sd, derive_seed(ds.seed, "test")))
    if ds.kind == "blobs":
        return (make_blobs(ds.n_train, ds.centers, ds.spread_sd, derive_seed(ds.seed, "train")),
                make_blobs(ds.n_test, ds.centers, ds.spread_sd, derive_seed(ds.seed, "test")))
    if ds.kind == "idx":
        train = load_idx(ds.train_images, ds.train_labels, ds.limit_train, ds.n_classes)
        test = load_idx(ds.test_images, ds.test_labels, ds.limit_test, ds.n_classes)
    else:
        train = load_csv(ds.train, ds.n_classes)
        test = load_csv(ds.test, ds.n_classes)
    n_classes = max(train.n_classes, test.n_classes)
    return (Dataset(train.inputs, train.labels, n_classes),
            Dataset(test.inputs, test.labels, n_classes))
