"""Minibatch Adam training with early stopping on a validation split."""

from __future__ import annotations

import csv
import logging
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from ..exceptions import ConfigurationError, TrainingError
from .mlp import MlpModel, _act, _dact, init_mlp

log = logging.getLogger(__name__)


@dataclass(eq=False)
class ResidualDataset:
    inputs: np.ndarray
    labels: np.ndarray
    train_idx: np.ndarray
    val_idx: np.ndarray
    variant: str = "a"

    def __post_init__(self):
        self.inputs = np.atleast_2d(np.asarray(self.inputs, dtype=float))
        self.labels = np.asarray(self.labels, dtype=float)
        if self.labels.ndim == 1:
            self.labels = self.labels[:, None]
        self.train_idx = np.asarray(self.train_idx, dtype=np.int64)
        self.val_idx = np.asarray(self.val_idx, dtype=np.int64)
        n = len(self.inputs)
        if len(self.labels) != n:
            raise ConfigurationError(f"{n} inputs but {len(self.labels)} labels")
        both = np.concatenate([self.train_idx, self.val_idx])
        if len(both) != n or not np.array_equal(np.sort(both), np.arange(n)):
            raise ConfigurationError("train/validation split must be disjoint and cover the dataset")

    @classmethod
    def with_random_split(cls, inputs, labels, validation_fraction=0.1, seed=0, variant="a"):
        n = len(inputs)
        if n < 2:
            raise ConfigurationError("need at least two samples to split")
        perm = np.random.default_rng(seed).permutation(n)
        n_val = min(max(1, int(round(validation_fraction * n))), n - 1)
        return cls(inputs, labels, np.sort(perm[n_val:]), np.sort(perm[:n_val]), variant)

    def __len__(self):
        return len(self.inputs)

    @property
    def feature_dim(self):
        return self.inputs.shape[1]

    @property
    def label_dim(self):
        return self.labels.shape[1]

    def is_validation(self):
        mask = np.zeros(len(self), dtype=bool)
        mask[self.val_idx] = True
        return mask


@dataclass
class TrainConfig:
    hidden_layers: int = 3
    width: int = 32
    activation: str = "tanh"
    learning_rate: float = 1e-4
    batch_size: int = 64
    max_epochs: int = 500
    patience: int = 20
    validation_fraction: float = 0.1
    seed: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def from_config(cls, cfg):
        table = cfg.get("train", cfg)
        known = {k: table[k] for k in cls.__dataclass_fields__ if k in table}
        return cls(**known)


@dataclass
class TrainingLog:
    rows: list = field(default_factory=list)
    seed: int = 0
    best_epoch: int = -1
    stopped_early: bool = False

    def append(self, epoch, train_mse, val_mse, wall_ms):
        self.rows.append({"epoch": epoch, "train_mse": train_mse, "val_mse": val_mse, "wall_ms": wall_ms})

    def write_csv(self, path):
        with open(path, "w", newline="") as fh:
            writer = csv.DictWriter(fh, fieldnames=["epoch", "train_mse", "val_mse", "wall_ms"])
            writer.writeheader()
            for row in self.rows:
                writer.writerow({
                    "epoch": row["epoch"],
                    "train_mse": repr(float(row["train_mse"])),
                    "val_mse": repr(float(row["val_mse"])),
                    "wall_ms": f"{row['wall_ms']:.3f}",
                })


def _scale(x):
    std = x.std(axis=0)
    return np.where(std > 1e-12, std, 1.0)


def _predict_norm(weights, biases, activation, Xn):
    a = Xn
    for w, b in zip(weights[:-1], biases[:-1]):
        a = _act(activation, a @ w.T + b)
    return a @ weights[-1].T + biases[-1]


def _mse(weights, biases, activation, Xn, Yn, y_scale):
    err = (_predict_norm(weights, biases, activation, Xn) - Yn) * y_scale
    return float(np.mean(err * err))


def train_residual(dataset, config=None, **overrides):
    """Fit a residual network; returns ``(MlpModel, TrainingLog)``.

    Inputs and labels are standardized with statistics of the training
    split, which are stored in the returned model. The parameters with the
    lowest validation MSE are returned.
    """
    config = config or TrainConfig()
    if overrides:
        config = TrainConfig(**{**asdict(config), **overrides})
    if len(dataset.train_idx) == 0 or len(dataset.val_idx) == 0:
        raise ConfigurationError("training and validation splits must both be non-empty")
    X, Y = dataset.inputs, dataset.labels
    Xtr, Ytr = X[dataset.train_idx], Y[dataset.train_idx]
    x_mean, x_scale = Xtr.mean(axis=0), _scale(Xtr)
    y_mean, y_scale = Ytr.mean(axis=0), _scale(Ytr)
    Xn_tr, Yn_tr = (Xtr - x_mean) / x_scale, (Ytr - y_mean) / y_scale
    Xn_val = (X[dataset.val_idx] - x_mean) / x_scale
    Yn_val = (Y[dataset.val_idx] - y_mean) / y_scale

    rng = np.random.default_rng(config.seed)
    sizes = [X.shape[1]] + [config.width] * config.hidden_layers + [Y.shape[1]]
    init = init_mlp(sizes, config.activation, dataset.variant, rng)
    weights = [w.copy() for w in init.weights]
    biases = [b.copy() for b in init.biases]
    params = weights + biases
    m = [np.zeros_like(p) for p in params]
    v = [np.zeros_like(p) for p in params]
    b1, b2 = config.beta1, config.beta2
    act = config.activation
    n_layers = len(weights)

    history = TrainingLog(seed=config.seed)
    best = (np.inf, -1, None)
    since_best = 0
    step = 0
    n_train = len(Xn_tr)
    for epoch in range(config.max_epochs):
        t0 = time.perf_counter()
        order = rng.permutation(n_train)
        for start in range(0, n_train, config.batch_size):
            idx = order[start:start + config.batch_size]
            xb, yb = Xn_tr[idx], Yn_tr[idx]
            acts = [xb]
            for w, b in zip(weights[:-1], biases[:-1]):
                acts.append(_act(act, acts[-1] @ w.T + b))
            out = acts[-1] @ weights[-1].T + biases[-1]
            diff = out - yb
            loss = float(np.mean(diff * diff))
            if not np.isfinite(loss):
                raise TrainingError(
                    f"non-finite loss at epoch {epoch}, step {step}; "
                    f"max |weight| = {max(np.abs(w).max() for w in weights):.3g}"
                )
            delta = 2.0 * diff / diff.size
            grads_w = [None] * n_layers
            grads_b = [None] * n_layers
            for k in range(n_layers - 1, -1, -1):
                grads_w[k] = delta.T @ acts[k]
                grads_b[k] = delta.sum(axis=0)
                if k:
                    delta = (delta @ weights[k]) * _dact(act, acts[k])
            step += 1
            lr_t = config.learning_rate * np.sqrt(1 - b2 ** step) / (1 - b1 ** step)
            for i, g in enumerate(grads_w + grads_b):
                m[i] *= b1
                m[i] += (1 - b1) * g
                v[i] *= b2
                v[i] += (1 - b2) * g * g
                params[i] -= lr_t * m[i] / (np.sqrt(v[i]) + config.eps)
        train_mse = _mse(weights, biases, act, Xn_tr, Yn_tr, y_scale)
        val_mse = _mse(weights, biases, act, Xn_val, Yn_val, y_scale)
        if not np.isfinite(val_mse):
            raise TrainingError(f"non-finite validation loss at epoch {epoch}")
        history.append(epoch, train_mse, val_mse, 1e3 * (time.perf_counter() - t0))
        if val_mse < best[0]:
            best = (val_mse, epoch, ([w.copy() for w in weights], [b.copy() for b in biases]))
            since_best = 0
        else:
            since_best += 1
            if since_best >= config.patience:
                history.stopped_early = True
                log.info("early stop at epoch %d (best %d, val %.3g)", epoch, best[1], best[0])
                break
    history.best_epoch = best[1]
    best_w, best_b = best[2]
    model = MlpModel(
        tuple(best_w),
        tuple(best_b),
        act,
        dataset.variant,
        x_mean,
        x_scale,
        y_mean,
        y_scale,
        metadata={
            "seed": config.seed,
            "best_epoch": best[1],
            "epochs_run": len(history.rows),
            "best_val_mse": best[0],
            "train_config": asdict(config),
        },
    )
    return model, history
