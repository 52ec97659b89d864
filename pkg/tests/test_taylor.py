import numpy as np
import pytest

from conftest import central_diff, random_quad_state, rel_err
from oracles import remainder_ratios
from rtnmpc.dynamics import DoubleIntegratorModel, QuadParams, QuadrotorModel
from rtnmpc.exceptions import ConfigurationError, UnsupportedOperationError
from rtnmpc.integrator import EvalCounter
from rtnmpc.neural import init_mlp
from rtnmpc.ocp import Iterate
from rtnmpc.residual import AnalyticDragResidual, NetworkResidual
from rtnmpc.sim import drag_acceleration
from rtnmpc.taylor import TaylorApprox, TaylorStack, eval_taylor, eval_taylor_jacobian, prepare_nodes

PLANT = QuadrotorModel(QuadParams.from_file())


def make_residual(rng, variant="a", width=16):
    d_in = len(PLANT.feature_names(variant))
    d_out = len(PLANT.output_rows(variant))
    return NetworkResidual(init_mlp([d_in, width, width, d_out], "tanh", variant, rng), PLANT, variant)


def test_approx_validation():
    with pytest.raises(ConfigurationError):
        TaylorApprox(np.zeros(3), np.zeros(2), np.zeros((3, 3)))
    with pytest.raises(ConfigurationError):
        TaylorApprox(np.zeros(2), np.zeros(1), np.zeros((1, 2)), order=2)
    H = np.zeros((1, 2, 2))
    H[0, 0, 1] = 1.0
    with pytest.raises(ConfigurationError):
        TaylorApprox(np.zeros(2), np.zeros(1), np.zeros((1, 2)), H, order=2)
    a = TaylorApprox(np.zeros(2), np.zeros(1), np.zeros((1, 2)))
    with pytest.raises(ValueError):
        a.J[0, 0] = 1.0


def test_json_roundtrip(rng):
    a = TaylorApprox(rng.normal(size=3), rng.normal(size=2), rng.normal(size=(2, 3)), np.zeros((2, 3, 3)), 2, 4)
    b = TaylorApprox.from_json(a.to_json())
    assert np.array_equal(a.J, b.J) and b.node == 4 and b.order == 2


@pytest.mark.parametrize("variant", ["a", "a_u", "full"])
def test_residual_chain_rule_matches_finite_differences(rng, variant):
    res = make_residual(rng, variant)
    for _ in range(5):
        x, u = random_quad_state(rng), rng.uniform(0, 5, 4)
        z = np.concatenate([x, u])
        F, J, H = res.evaluate_batch(x[None], u[None], 2)
        assert np.allclose(F[0], res.value(x, u))
        assert rel_err(J[0], central_diff(lambda v: res.value(v[:13], v[13:]), z)) < 1e-7
        assert rel_err(H[0], central_diff(lambda v: res.jacobian(v[:13], v[13:]), z)) < 1e-7
        assert np.allclose(res.jacobian(x, u), J[0], atol=1e-13)


def test_drag_residual_matches_simulator_drag(rng):
    drag = np.array([0.3, 0.3, 0.15])
    res = AnalyticDragResidual(drag)
    x, u = random_quad_state(rng), np.ones(4)
    assert np.allclose(res.value(x, u), drag_acceleration(x, drag))
    z = np.concatenate([x, u])
    assert rel_err(res.jacobian(x, u), central_diff(lambda v: res.value(v[:13], v[13:]), z)) < 1e-7
    with pytest.raises(UnsupportedOperationError):
        res.evaluate_batch(x[None], u[None], 2)


def test_variant_mismatch_rejected(rng):
    model = init_mlp([3, 4, 3], input_variant="a", rng=rng)
    with pytest.raises(ConfigurationError):
        NetworkResidual(model, PLANT, "full")
    with pytest.raises(ConfigurationError):
        NetworkResidual(init_mlp([3, 4, 2], input_variant="a", rng=rng), PLANT, "a")


def test_prepare_nodes_uses_one_batched_call(rng):
    counter = EvalCounter()
    res = make_residual(rng)
    res.counter = counter
    xs = np.stack([random_quad_state(rng) for _ in range(11)])
    it = Iterate(xs, rng.uniform(1, 3, (10, 4)))
    approxes = prepare_nodes(res, it, 1)
    assert counter.net_batched_calls == 1 and counter.net_batched_points == 10
    assert counter.net_value == 0 and counter.net_jacobian == 0
    assert all(a.verify(res, 13) for a in approxes)
    assert [a.node for a in approxes] == list(range(10))


def test_stack_matches_single_expansions(rng):
    res = make_residual(rng)
    xs = np.stack([random_quad_state(rng) for _ in range(5)])
    approxes = prepare_nodes(res, Iterate(xs, rng.uniform(1, 3, (4, 4))), 2)
    stack = TaylorStack(approxes)
    Z = stack.Z0 + 0.1 * rng.normal(size=stack.Z0.shape)
    V, J = stack.value(Z), stack.jacobian(Z)
    for k, a in enumerate(approxes):
        assert np.allclose(V[k], eval_taylor(a, Z[k]))
        assert np.allclose(J[k], eval_taylor_jacobian(a, Z[k]))


def test_expansion_is_exact_at_linearization_point(rng):
    res = make_residual(rng)
    x, u = random_quad_state(rng), np.ones(4)
    F, J, _ = res.evaluate_batch(x[None], u[None], 1)
    a = TaylorApprox(np.concatenate([x, u]), F[0], J[0])
    assert np.array_equal(eval_taylor(a, a.z0), F[0])


@pytest.mark.parametrize("order,lo,hi", [(1, 3.5, 4.5), (2, 6.5, 9.5)])
def test_remainder_order_quadrotor(rng, order, lo, hi):
    assert lo <= remainder_ratios(make_residual(rng), PLANT, order, rng) <= hi


def test_remainder_order_double_integrator(rng):
    plant = DoubleIntegratorModel()
    res = NetworkResidual(init_mlp([3, 16, 16, 2], "tanh", "full", rng), plant, "full")
    assert 3.5 <= remainder_ratios(res, plant, 1, rng) <= 4.5
    assert 6.5 <= remainder_ratios(res, plant, 2, rng) <= 9.5
