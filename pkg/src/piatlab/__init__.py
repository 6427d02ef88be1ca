"""Desk-scale adversarial training with epoch-end parameter interpolation."""
from ._kernels import BACKEND
from .attacks import AttackSpec, evaluate_robust, fgsm, pgd, project
from .data import Dataset, load_idx, make_blobs, make_two_moons
from .losses import LossSpec, at_ce_loss, nmse_loss, total_loss, trades_loss
from .models import MLP, ParamVector, build_mlp
from .piat import LambdaSchedule, interpolate, lambda_at, run_piat
from .trainer import EpochRecord, TrainPlan, evaluate, lr_at, sgd_step, train_standard

__version__ = "0.1.0"

__all__ = [
    "AttackSpec", "BACKEND", "Dataset", "EpochRecord", "LambdaSchedule", "LossSpec", "MLP",
    "ParamVector", "TrainPlan", "at_ce_loss", "build_mlp", "evaluate", "evaluate_robust",
    "fgsm", "interpolate", "lambda_at", "load_idx", "lr_at", "make_blobs", "make_two_moons",
    "nmse_loss", "pgd", "project", "run_piat", "sgd_step", "total_loss", "trades_loss",
    "train_standard",
]
