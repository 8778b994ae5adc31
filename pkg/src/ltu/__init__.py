"""Desk-scale machine unlearning with meta-optimised remembering and forgetting feedback."""

from ._kernels import BACKEND
from .data import Dataset, UnlearnSplit, gen_blobs, gen_moons, load_csv, make_split, save_csv
from .diffnum import ModelSpec, accuracy, gradient, hvp, init_params
from .engine import LtuConfig, TrainConfig, ltu_unlearn, retrain_gold, train_original
from .harmonize import combine, cosine, harmonize
from .meta import MetaConfig, MetaTask, meta_gradient, meta_objective
from .metrics import MetricsReport, compute_metrics, delta_report
from .mi import MiEnsemble, train_mi_ensemble

__version__ = "0.1.0"

__all__ = [
    "BACKEND",
    "Dataset",
    "LtuConfig",
    "MetaConfig",
    "MetaTask",
    "MetricsReport",
    "MiEnsemble",
    "ModelSpec",
    "TrainConfig",
    "UnlearnSplit",
    "accuracy",
    "combine",
    "compute_metrics",
    "cosine",
    "delta_report",
    "gen_blobs",
    "gen_moons",
    "gradient",
    "harmonize",
    "hvp",
    "init_params",
    "load_csv",
    "ltu_unlearn",
    "make_split",
    "meta_gradient",
    "meta_objective",
    "retrain_gold",
    "save_csv",
    "train_mi_ensemble",
    "train_original",
]
