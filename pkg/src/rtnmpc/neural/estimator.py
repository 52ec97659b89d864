"""scikit-learn compatible wrapper around the residual network trainer."""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from .mlp import mlp_batched_eval
from .training import ResidualDataset, TrainConfig, train_residual


class MlpResidualRegressor(RegressorMixin, BaseEstimator):
    """Feed-forward residual regressor trained with Adam and early stopping.

    Parameters
    ----------
    hidden_layers, width : int
        Architecture ``N-<hidden_layers>-<width>``.
    activation : {"tanh", "relu"}
        Hidden activation; Hessians need ``"tanh"``.
    input_variant : str
        Feature layout tag stored with the model.
    learning_rate, batch_size, max_epochs, patience, validation_fraction
        Optimizer and early-stopping settings.
    random_state : int
        Seed for initialization, the validation split and shuffling.
    """

    def __init__(self, hidden_layers=3, width=32, activation="tanh", input_variant="a",
                 learning_rate=1e-4, batch_size=64, max_epochs=500, patience=20,
                 validation_fraction=0.1, random_state=0):
        self.hidden_layers = hidden_layers
        self.width = width
        self.activation = activation
        self.input_variant = input_variant
        self.learning_rate = learning_rate
        self.batch_size = batch_size
        self.max_epochs = max_epochs
        self.patience = patience
        self.validation_fraction = validation_fraction
        self.random_state = random_state

    def _train_config(self):
        return TrainConfig(
            hidden_layers=self.hidden_layers,
            width=self.width,
            activation=self.activation,
            learning_rate=self.learning_rate,
            batch_size=self.batch_size,
            max_epochs=self.max_epochs,
            patience=self.patience,
            validation_fraction=self.validation_fraction,
            seed=self.random_state,
        )

    def fit(self, X, y):
        X, y = check_X_y(X, y, multi_output=True, y_numeric=True)
        self._y_1d = y.ndim == 1
        dataset = ResidualDataset.with_random_split(
            X, y, self.validation_fraction, self.random_state, self.input_variant
        )
        self.model_, self.training_log_ = train_residual(dataset, self._train_config())
        self.n_features_in_ = X.shape[1]
        return self

    @classmethod
    def from_model(cls, model):
        est = cls(hidden_layers=len(model.layer_sizes) - 2, width=model.layer_sizes[1],
                  activation=model.activation, input_variant=model.input_variant)
        est.model_ = model
        est.training_log_ = None
        est.n_features_in_ = model.in_dim
        est._y_1d = False
        return est

    def _check(self, X):
        check_is_fitted(self, "model_")
        return check_array(X, ensure_2d=True)

    def predict(self, X):
        out = mlp_batched_eval(self.model_, self._check(X))
        return out[:, 0] if self._y_1d else out

    def jacobian(self, X):
        return mlp_batched_eval(self.model_, self._check(X), "jacobian")[1]

    def hessian(self, X):
        return mlp_batched_eval(self.model_, self._check(X), "hessian")[2]
