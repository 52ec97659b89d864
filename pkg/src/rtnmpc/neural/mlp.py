"""Dense feed-forward networks with analytic first and second derivatives.

Every evaluation works on normalized inputs ``(z - x_mean) / x_scale`` and
returns de-normalized outputs ``y_scale * net + y_mean``; derivatives are
taken with respect to the raw input ``z``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..exceptions import ConfigurationError, UnsupportedOperationError

ACTIVATIONS = ("tanh", "relu")
ORDERS = ("value", "jacobian", "hessian")


@dataclass(frozen=True, eq=False)
class MlpModel:
    """Immutable network: hidden layers use ``activation``, the output layer is linear."""

    weights: tuple
    biases: tuple
    activation: str = "tanh"
    input_variant: str = "a"
    x_mean: np.ndarray = None
    x_scale: np.ndarray = None
    y_mean: np.ndarray = None
    y_scale: np.ndarray = None
    feature_layout_version: int = 1
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        weights = tuple(np.array(w, dtype=float) for w in self.weights)
        biases = tuple(np.array(b, dtype=float).reshape(-1) for b in self.biases)
        if not weights or len(weights) != len(biases):
            raise ConfigurationError("need one bias vector per weight matrix")
        for k, (w, b) in enumerate(zip(weights, biases)):
            if w.ndim != 2 or w.shape[0] != b.shape[0]:
                raise ConfigurationError(f"layer {k}: weight {w.shape} and bias {b.shape} disagree")
            if k and w.shape[1] != weights[k - 1].shape[0]:
                raise ConfigurationError(f"layer {k} input width {w.shape[1]} != previous output {weights[k - 1].shape[0]}")
        if self.activation not in ACTIVATIONS:
            raise ConfigurationError(f"activation must be one of {ACTIVATIONS}")
        d_in, d_out = weights[0].shape[1], weights[-1].shape[0]
        x_mean = np.zeros(d_in) if self.x_mean is None else np.array(self.x_mean, dtype=float).reshape(d_in)
        x_scale = np.ones(d_in) if self.x_scale is None else np.array(self.x_scale, dtype=float).reshape(d_in)
        y_mean = np.zeros(d_out) if self.y_mean is None else np.array(self.y_mean, dtype=float).reshape(d_out)
        y_scale = np.ones(d_out) if self.y_scale is None else np.array(self.y_scale, dtype=float).reshape(d_out)
        if np.any(x_scale <= 0) or np.any(y_scale <= 0):
            raise ConfigurationError("normalization scales must be strictly positive")
        for arr in weights + biases + (x_mean, x_scale, y_mean, y_scale):
            arr.flags.writeable = False
        object.__setattr__(self, "weights", weights)
        object.__setattr__(self, "biases", biases)
        object.__setattr__(self, "x_mean", x_mean)
        object.__setattr__(self, "x_scale", x_scale)
        object.__setattr__(self, "y_mean", y_mean)
        object.__setattr__(self, "y_scale", y_scale)

    @property
    def layer_sizes(self):
        return [self.weights[0].shape[1]] + [w.shape[0] for w in self.weights]

    @property
    def in_dim(self):
        return self.weights[0].shape[1]

    @property
    def out_dim(self):
        return self.weights[-1].shape[0]

    @property
    def n_params(self):
        return int(sum(w.size + b.size for w, b in zip(self.weights, self.biases)))

    @property
    def name(self):
        hidden = self.layer_sizes[1:-1]
        if not hidden:
            return "N-0-0"
        width = hidden[0] if len(set(hidden)) == 1 else "x".join(map(str, hidden))
        return f"N-{len(hidden)}-{width}"


def init_mlp(layer_sizes, activation="tanh", input_variant="a", rng=None, **norm):
    """Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) initialization."""
    rng = np.random.default_rng(rng)
    if len(layer_sizes) < 2 or min(layer_sizes) < 1:
        raise ConfigurationError(f"invalid layer sizes {layer_sizes}")
    weights, biases = [], []
    for fan_in, fan_out in zip(layer_sizes[:-1], layer_sizes[1:]):
        bound = 1.0 / np.sqrt(fan_in)
        weights.append(rng.uniform(-bound, bound, size=(fan_out, fan_in)))
        biases.append(rng.uniform(-bound, bound, size=fan_out))
    return MlpModel(tuple(weights), tuple(biases), activation, input_variant, **norm)


def _act(name, h):
    if name == "tanh":
        return np.tanh(h)
    return np.maximum(h, 0.0)


def _dact(name, a):
    if name == "tanh":
        return 1.0 - a * a
    return (a > 0.0).astype(float)


def _hidden(model, Zn):
    acts = []
    a = Zn
    for w, b in zip(model.weights[:-1], model.biases[:-1]):
        a = _act(model.activation, a @ w.T + b)
        acts.append(a)
    return acts


def _output(model, last):
    return (last @ model.weights[-1].T + model.biases[-1]) * model.y_scale + model.y_mean


def _jacobian(model, Zn, acts):
    K = Zn.shape[0]
    d_in, d_out = model.in_dim, model.out_dim
    if d_out <= d_in:
        # reverse mode: propagate d_out cotangent rows back through the layers
        g = np.broadcast_to(model.y_scale[:, None] * model.weights[-1], (K,) + model.weights[-1].shape)
        for w, a in zip(model.weights[-2::-1], acts[::-1]):
            g = g * _dact(model.activation, a)[:, None, :]
            g = (g.reshape(K * d_out, -1) @ w).reshape(K, d_out, w.shape[1])
        return g / model.x_scale
    # forward mode: propagate d_in tangent columns
    g = None
    for w, a in zip(model.weights[:-1], acts):
        if g is None:
            g = np.broadcast_to(w / model.x_scale, (K,) + w.shape)
        else:
            width = g.shape[1]
            g = (w @ g.transpose(1, 0, 2).reshape(width, K * d_in)).reshape(w.shape[0], K, d_in).transpose(1, 0, 2)
        g = _dact(model.activation, a)[:, :, None] * g
    w_out = model.y_scale[:, None] * model.weights[-1]
    if g is None:
        return np.broadcast_to(w_out / model.x_scale, (K, d_out, d_in)).copy()
    width = g.shape[1]
    return (w_out @ g.transpose(1, 0, 2).reshape(width, K * d_in)).reshape(d_out, K, d_in).transpose(1, 0, 2)


def _hessian(model, Zn, acts):
    if model.activation != "tanh":
        raise UnsupportedOperationError(f"Hessians need a twice differentiable activation, not {model.activation!r}")
    K = Zn.shape[0]
    d_in = model.in_dim
    G = T = None
    for w, a in zip(model.weights[:-1], acts):
        if G is None:
            dh = np.broadcast_to(w / model.x_scale, (K,) + w.shape)
            d2h = np.zeros((K, w.shape[0], d_in, d_in))
        else:
            dh = np.einsum("ij,kja->kia", w, G)
            d2h = np.einsum("ij,kjab->kiab", w, T)
        s1 = 1.0 - a * a
        s2 = -2.0 * a * s1
        G = s1[:, :, None] * dh
        T = s2[:, :, None, None] * dh[:, :, :, None] * dh[:, :, None, :] + s1[:, :, None, None] * d2h
    if T is None:
        return np.zeros((K, model.out_dim, d_in, d_in))
    w_out = model.y_scale[:, None] * model.weights[-1]
    return np.einsum("ij,kjab->kiab", w_out, T)


def _as_batch(model, Z):
    try:
        Z = np.asarray(Z, dtype=float)
    except ValueError as exc:
        raise ConfigurationError(f"ragged feature batch: {exc}") from None
    if Z.ndim != 2 or Z.shape[1] != model.in_dim:
        raise ConfigurationError(f"expected a (K, {model.in_dim}) feature batch, got shape {Z.shape}")
    return Z


def _as_point(model, z):
    z = np.asarray(z, dtype=float)
    if z.shape != (model.in_dim,):
        raise ConfigurationError(f"expected {model.in_dim} features, got shape {z.shape}")
    return z[None, :]


def mlp_batched_eval(model, Z, order="value"):
    """Evaluate K feature rows at once.

    ``order="value"`` returns values (K, out); ``"jacobian"`` returns
    ``(values, jacobians)``; ``"hessian"`` returns ``(values, jacobians,
    hessians)`` with hessians shaped (K, out, in, in).
    """
    if order not in ORDERS:
        raise ConfigurationError(f"order must be one of {ORDERS}")
    Z = _as_batch(model, Z)
    Zn = (Z - model.x_mean) / model.x_scale
    acts = _hidden(model, Zn)
    values = _output(model, acts[-1] if acts else Zn)
    if order == "value":
        return values
    jac = _jacobian(model, Zn, acts)
    if order == "jacobian":
        return values, jac
    return values, jac, _hessian(model, Zn, acts)


def mlp_forward(model, z):
    return mlp_batched_eval(model, _as_point(model, z))[0]


def mlp_jacobian(model, z):
    return mlp_batched_eval(model, _as_point(model, z), "jacobian")[1][0]


def mlp_hessian(model, z):
    return mlp_batched_eval(model, _as_point(model, z), "hessian")[2][0]
