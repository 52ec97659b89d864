"""Feed-forward residual networks: evaluation, derivatives, training, files."""

from .estimator import MlpResidualRegressor
from .io import load_dataset, load_model, save_dataset, save_model
from .mlp import (
    MlpModel,
    init_mlp,
    mlp_batched_eval,
    mlp_forward,
    mlp_hessian,
    mlp_jacobian,
)
from .training import ResidualDataset, TrainConfig, TrainingLog, train_residual

__all__ = [
    "MlpModel",
    "MlpResidualRegressor",
    "ResidualDataset",
    "TrainConfig",
    "TrainingLog",
    "init_mlp",
    "load_dataset",
    "load_model",
    "mlp_batched_eval",
    "mlp_forward",
    "mlp_hessian",
    "mlp_jacobian",
    "save_dataset",
    "save_model",
    "train_residual",
]
