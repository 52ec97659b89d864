import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import central_diff, rel_err
from rtnmpc.exceptions import ConfigurationError, UnsupportedOperationError
from rtnmpc.neural import (
    MlpModel,
    MlpResidualRegressor,
    ResidualDataset,
    TrainConfig,
    init_mlp,
    load_dataset,
    load_model,
    mlp_batched_eval,
    mlp_forward,
    mlp_hessian,
    mlp_jacobian,
    save_dataset,
    save_model,
    train_residual,
)
from rtnmpc.neural.io import sidecar_path


def loop_forward(model, z):
    """Scalar reference implementation with explicit loops."""
    a = [(zi - m) / s for zi, m, s in zip(z, model.x_mean, model.x_scale)]
    for k, (w, b) in enumerate(zip(model.weights, model.biases)):
        pre = [sum(w[i, j] * a[j] for j in range(len(a))) + b[i] for i in range(len(b))]
        if k < len(model.weights) - 1:
            a = [math.tanh(p) if model.activation == "tanh" else max(p, 0.0) for p in pre]
        else:
            a = pre
    return np.array([ai * s + m for ai, s, m in zip(a, model.y_scale, model.y_mean)])


def normalized_model(rng, sizes, activation="tanh"):
    return init_mlp(sizes, activation, "a", rng, x_mean=rng.normal(size=sizes[0]),
                    x_scale=rng.uniform(0.5, 2.0, sizes[0]), y_mean=rng.normal(size=sizes[-1]),
                    y_scale=rng.uniform(0.5, 2.0, sizes[-1]))


def test_forward_matches_loop_oracle(rng):
    for sizes in ([3, 8, 2], [5, 16, 16, 3], [2, 4, 4, 4, 7]):
        model = normalized_model(rng, sizes)
        Z = rng.normal(size=(6, sizes[0]))
        batch = mlp_batched_eval(model, Z)
        for k in range(6):
            assert np.allclose(batch[k], loop_forward(model, Z[k]), rtol=1e-12, atol=1e-12)
            assert np.allclose(mlp_forward(model, Z[k]), batch[k], rtol=1e-13, atol=1e-13)


def test_relu_forward_matches_loop_oracle(rng):
    model = normalized_model(rng, [4, 10, 10, 3], "relu")
    Z = rng.normal(size=(5, 4))
    for k in range(5):
        assert np.allclose(mlp_forward(model, Z[k]), loop_forward(model, Z[k]), atol=1e-12)


@pytest.mark.parametrize("sizes", [[3, 32, 32, 32, 3], [17, 8, 6], [2, 5, 9]])
def test_jacobian_and_hessian_match_finite_differences(rng, sizes):
    # covers both the reverse-mode (out <= in) and forward-mode (out > in) Jacobian paths
    model = normalized_model(rng, sizes)
    for _ in range(5):
        z = rng.normal(size=sizes[0])
        J = mlp_jacobian(model, z)
        assert rel_err(J, central_diff(lambda v: loop_forward(model, v), z)) < 1e-7
        H = mlp_hessian(model, z)
        assert rel_err(H, central_diff(lambda v: mlp_jacobian(model, v), z)) < 1e-7
        assert np.allclose(H, np.swapaxes(H, 1, 2), atol=1e-12)


def test_batched_jacobian_matches_single_points(rng):
    model = normalized_model(rng, [3, 16, 16, 3])
    Z = rng.normal(size=(10, 3))
    _, J, H = mlp_batched_eval(model, Z, "hessian")
    for k in range(10):
        assert np.allclose(J[k], mlp_jacobian(model, Z[k]), atol=1e-13)
        assert np.allclose(H[k], mlp_hessian(model, Z[k]), atol=1e-13)


def test_relu_hessian_unsupported(rng):
    model = init_mlp([3, 4, 2], "relu", rng=rng)
    with pytest.raises(UnsupportedOperationError):
        mlp_hessian(model, np.zeros(3))


def test_model_validation():
    with pytest.raises(ConfigurationError):
        MlpModel((np.zeros((4, 3)), np.zeros((2, 5))), (np.zeros(4), np.zeros(2)))
    with pytest.raises(ConfigurationError):
        MlpModel((np.zeros((2, 3)),), (np.zeros(2),), activation="sigmoid")
    with pytest.raises(ConfigurationError):
        MlpModel((np.zeros((2, 3)),), (np.zeros(2),), x_scale=np.zeros(3))
    model = init_mlp([3, 4, 2])
    with pytest.raises(ConfigurationError):
        mlp_batched_eval(model, np.zeros((2, 4)))
    with pytest.raises(ValueError):
        model.weights[0][0, 0] = 1.0


def test_model_name_and_params():
    model = init_mlp([3, 32, 32, 32, 3])
    assert model.name == "N-3-32"
    assert model.n_params == 3 * 32 + 32 + 2 * (32 * 32 + 32) + 32 * 3 + 3


def test_model_roundtrip(tmp_path, rng):
    model = normalized_model(rng, [3, 8, 8, 3])
    path = save_model(model, tmp_path / "m.bin")
    back = load_model(path)
    Z = rng.normal(size=(4, 3))
    assert np.array_equal(mlp_batched_eval(model, Z), mlp_batched_eval(back, Z))
    meta = json.loads(sidecar_path(path).read_text())
    assert meta["layer_sizes"] == [3, 8, 8, 3]
    assert meta["name"] == "N-2-8"


def test_corrupt_model_rejected(tmp_path, rng):
    path = save_model(init_mlp([3, 4, 3], rng=rng), tmp_path / "m.bin")
    raw = bytearray(path.read_bytes())
    path.write_bytes(bytes(raw[:-5]))
    with pytest.raises(ConfigurationError):
        load_model(path)


def test_dataset_roundtrip(tmp_path, rng):
    ds = ResidualDataset.with_random_split(rng.normal(size=(50, 3)), rng.normal(size=(50, 3)), 0.2, 1)
    path = save_dataset(ds, tmp_path / "d.bin")
    back = load_dataset(path)
    assert np.array_equal(back.inputs, ds.inputs)
    assert np.array_equal(back.labels, ds.labels)
    assert np.array_equal(back.val_idx, ds.val_idx)
    assert len(ds.val_idx) == 10


def test_training_fits_smooth_function(rng):
    X = rng.uniform(-2, 2, size=(800, 2))
    Y = np.column_stack([np.sin(X[:, 0]) * X[:, 1], 0.5 * X[:, 0] ** 2])
    ds = ResidualDataset.with_random_split(X, Y, 0.1, 0)
    model, history = train_residual(ds, TrainConfig(hidden_layers=2, width=16, learning_rate=5e-3, max_epochs=120,
                                                    patience=200))
    val = history.rows[history.best_epoch]["val_mse"]
    assert val < 0.05 * np.var(Y)
    assert history.rows[0]["val_mse"] > val


def test_training_is_deterministic(rng):
    X = rng.normal(size=(200, 3))
    Y = X[:, :2] ** 2
    ds = ResidualDataset.with_random_split(X, Y, 0.1, 0)
    cfg = TrainConfig(hidden_layers=1, width=8, max_epochs=5, learning_rate=1e-3)
    a, _ = train_residual(ds, cfg)
    b, _ = train_residual(ds, cfg)
    for wa, wb in zip(a.weights, b.weights):
        assert np.array_equal(wa, wb)


def test_regressor_follows_estimator_conventions(rng):
    from sklearn.base import clone

    est = MlpResidualRegressor(hidden_layers=1, width=8, max_epochs=20, learning_rate=1e-2, random_state=3)
    assert clone(est).get_params() == est.get_params()
    X = rng.normal(size=(300, 2))
    y = X[:, 0] - 2.0 * X[:, 1]
    est.fit(X, y)
    assert est.predict(X).shape == (300,)
    assert est.score(X, y) > 0.9
    assert est.jacobian(X[:2]).shape == (2, 1, 2)


@settings(max_examples=25, deadline=None)
@given(st.integers(1, 3), st.integers(1, 12), st.integers(1, 5), st.integers(1, 5), st.integers(0, 2**31 - 1))
def test_zero_output_layer_gives_zero(depth, width, d_in, d_out, seed):
    from rtnmpc.bench import make_zero_network

    model = make_zero_network(depth, width, d_in, d_out, rng=np.random.default_rng(seed))
    Z = np.random.default_rng(seed + 1).normal(size=(4, d_in))
    F, J, H = mlp_batched_eval(model, Z, "hessian")
    assert not F.any() and not J.any() and not H.any()
