import numpy as np
import pytest

from oracles import riccati_gains
from rtnmpc.bench import make_zero_network
from rtnmpc.config import load_default
from rtnmpc.dynamics import DoubleIntegratorModel, QuadParams, QuadrotorModel
from rtnmpc.exceptions import ConfigurationError
from rtnmpc.ocp import Iterate, OcpConfig, RtiController, build_qp, init_iterate, rti_cycle
from rtnmpc.residual import AnalyticDragResidual, NetworkResidual
from rtnmpc.sim import SimConfig, Trajectory, reference_window
from rtnmpc.taylor import prepare_nodes

DI = DoubleIntegratorModel()


def di_config(**kw):
    return OcpConfig.from_config(load_default("ocp_double_integrator"), DI, **kw)


def di_oracle_gain(cfg):
    h = cfg.dt
    A = np.array([[1.0, h], [0.0, 1.0]])
    B = np.array([[0.5 * h * h], [h]])
    Q, R = np.diag(cfg.Q), np.diag(cfg.R)
    return riccati_gains(A, B, Q, R, Q, cfg.N)[0]


def test_feedback_matches_riccati_gain(rng):
    cfg = di_config()
    K = di_oracle_gain(cfg)
    ctrl = RtiController(DI, cfg)
    ref_x, ref_u = np.zeros((cfg.N + 1, 2)), np.zeros((cfg.N, 1))
    x = np.array([1.0, -0.5])
    for _ in range(30):
        u = rti_cycle(ctrl, x, ref_x, ref_u)
        expected = -K @ x
        assert abs(u[0] - expected[0]) <= 1e-6 * abs(expected[0])
        x = rng.normal(size=2)


def test_full_horizon_gains(rng):
    # feedback on each shifted node: the k-th planned input is -K_k x_k along the optimal rollout
    cfg = di_config(N=6)
    h = cfg.dt
    A = np.array([[1.0, h], [0.0, 1.0]])
    B = np.array([[0.5 * h * h], [h]])
    gains = riccati_gains(A, B, np.diag(cfg.Q), np.diag(cfg.R), np.diag(cfg.Q), cfg.N)
    ctrl = RtiController(DI, cfg)
    x0 = np.array([0.7, 0.2])
    ctrl.cycle(x0, np.zeros((7, 2)), np.zeros((6, 1)))
    # the stored iterate is the solution shifted by one node, the first input was applied
    x = x0
    plan = []
    for k in range(cfg.N):
        u = -gains[k] @ x
        plan.append(u[0])
        x = A @ x + B @ u
    iterate_us = np.concatenate([[ctrl.last_command[0]], ctrl.iterate.us[:-1, 0]])
    assert np.allclose(iterate_us, plan, rtol=1e-8, atol=1e-12)


def test_zero_network_matches_nominal_both_modes(rng):
    model = make_zero_network(2, 16, rng=rng)
    ref_x = np.zeros((11, 2))
    ref_x[:, 0] = 1.0
    cmds = {}
    for mode in ("rtn", "naive", None):
        cfg = di_config(mode=mode or "rtn")
        res = NetworkResidual(model, DI, "full") if mode else None
        ctrl = RtiController(DI, cfg, res)
        x = np.zeros(2)
        out = []
        for _ in range(20):
            u = ctrl.cycle(x, ref_x, np.zeros((10, 1)))
            out.append(u[0])
            x = np.array([x[0] + 0.02 * x[1] + 2e-4 * u[0], x[1] + 0.02 * u[0]])
        cmds[mode] = np.array(out)
    assert np.abs(cmds["rtn"] - cmds[None]).max() < 1e-8
    assert np.abs(cmds["naive"] - cmds[None]).max() < 1e-8


def test_evaluation_counts_per_cycle(rng):
    model = make_zero_network(2, 8, rng=rng)
    for mode in ("rtn", "naive"):
        ctrl = RtiController(DI, di_config(mode=mode), NetworkResidual(model, DI, "full"))
        for _ in range(3):
            ctrl.cycle(np.zeros(2), np.zeros((11, 2)), np.zeros((10, 1)))
        c = ctrl.last_record.counters
        if mode == "rtn":
            assert (c["net_batched_calls"], c["net_batched_points"], c["net_value"], c["net_jacobian"]) == (1, 10, 0, 0)
        else:
            assert (c["net_batched_calls"], c["net_value"], c["net_jacobian"]) == (0, 40, 40)


def test_rtn_and_naive_agree_near_iterate(rng):
    # rtn freezes the residual at the node while naive re-evaluates it in every RK4 stage
    plant = QuadrotorModel(QuadParams.from_file())
    cfg = OcpConfig.from_config(load_default("ocp_quad"), plant)
    drag = AnalyticDragResidual([0.3, 0.3, 0.15])
    traj = Trajectory(speed=5.0)
    ref_x, ref_u = reference_window(traj, 4.0, cfg.N, cfg.dt, plant.params)
    it = init_iterate(plant, ref_x[0], ref_x, ref_u)
    rtn = build_qp(plant, it, cfg, ref_x, ref_u, prepare_nodes(drag, it, 1), drag)
    naive_cfg = OcpConfig.from_config(load_default("ocp_quad"), plant, mode="naive")
    naive = build_qp(plant, it, naive_cfg, ref_x, ref_u, None, drag)
    assert np.abs(rtn.phi_bar - naive.phi_bar).max() < 1e-3
    assert np.abs(rtn.A - naive.A).max() < 1e-2


def test_rtn_without_approximations_rejected(rng):
    model = make_zero_network(1, 4, rng=rng)
    it = Iterate(np.zeros((11, 2)), np.zeros((10, 1)))
    with pytest.raises(ConfigurationError):
        build_qp(DI, it, di_config(), np.zeros((11, 2)), np.zeros((10, 1)), None, NetworkResidual(model, DI))


def test_input_bounds_respected_exactly():
    cfg = di_config(u_min=[-0.5], u_max=[0.5])
    ctrl = RtiController(DI, cfg)
    u = ctrl.cycle(np.array([5.0, 0.0]), np.zeros((11, 2)), np.zeros((10, 1)))
    assert u[0] == -0.5
    assert np.all(ctrl.iterate.us >= -0.5) and np.all(ctrl.iterate.us <= 0.5)


def test_failed_qp_falls_back(monkeypatch):
    import rtnmpc.ocp as ocp_mod
    from rtnmpc.qp import BoxQpResult

    ctrl = RtiController(DI, di_config())
    ref = (np.zeros((11, 2)), np.zeros((10, 1)))
    u0 = ctrl.cycle(np.array([1.0, 0.0]), *ref)

    def broken(*args, **kwargs):
        return BoxQpResult(np.full(10, np.nan), np.zeros(10), np.zeros(10), "max_iter", 200, np.zeros(10), [])

    monkeypatch.setattr(ocp_mod, "solve_box_qp", broken)
    saved = ctrl.iterate.copy()
    u1 = ctrl.cycle(np.array([1.0, 0.0]), *ref)
    assert np.array_equal(u1, u0)
    assert ctrl.last_record.status == "failed" and ctrl.failed_cycles == 1
    assert np.array_equal(ctrl.iterate.xs, saved.xs)


def test_feedback_before_prepare_rejected():
    ctrl = RtiController(DI, di_config())
    ctrl.reset(np.zeros(2), np.zeros((11, 2)), np.zeros((10, 1)))
    with pytest.raises(ConfigurationError):
        ctrl.feedback(np.zeros(2))


def test_reference_shape_checked():
    ctrl = RtiController(DI, di_config())
    with pytest.raises(ConfigurationError):
        ctrl.cycle(np.zeros(2), np.zeros((10, 2)), np.zeros((10, 1)))


def test_config_validation():
    with pytest.raises(ConfigurationError):
        di_config(N=0)
    with pytest.raises(ConfigurationError):
        di_config(mode="fast")
    with pytest.raises(ConfigurationError):
        di_config(u_min=[1.0], u_max=[0.0])
    with pytest.raises(ConfigurationError):
        di_config(taylor_order=3)


def test_shift_interpolates():
    it = Iterate(np.arange(6.0).reshape(3, 2), np.array([[0.0], [1.0]]))
    full = it.shifted(1.0)
    assert np.array_equal(full.xs, [[2, 3], [4, 5], [4, 5]])
    assert np.array_equal(full.us, [[1.0], [1.0]])
    half = it.shifted(0.5)
    assert np.allclose(half.xs, [[1, 2], [3, 4], [4, 5]])
    with pytest.raises(ConfigurationError):
        it.shifted(0.0)


def test_parallel_preparation_gives_identical_commands(rng):
    model = make_zero_network(2, 8, rng=rng)
    ref_x = np.ones((11, 2))
    out = []
    for parallel in (False, True):
        ctrl = RtiController(DI, di_config(), NetworkResidual(model, DI), parallel_prep=parallel)
        out.append([ctrl.cycle(np.zeros(2), ref_x, np.zeros((10, 1)))[0] for _ in range(5)])
        ctrl.close()
    assert out[0] == out[1]


def test_telemetry_csv(tmp_path):
    ctrl = RtiController(DI, di_config())
    for _ in range(3):
        ctrl.cycle(np.zeros(2), np.ones((11, 2)), np.zeros((10, 1)))
    path = ctrl.write_telemetry(tmp_path / "t.csv")
    lines = path.read_text().splitlines()
    assert len(lines) == 4 and lines[0].startswith("cycle,prep_dd_ms")


def test_quad_hover_is_stationary():
    plant = QuadrotorModel(QuadParams.from_file())
    cfg = OcpConfig.from_config(load_default("ocp_quad"), plant)
    x = np.zeros(13)
    x[3] = 1.0
    ref_x = np.tile(x, (cfg.N + 1, 1))
    ref_u = np.full((cfg.N, 4), plant.params.hover_thrust)
    u = RtiController(plant, cfg).cycle(x, ref_x, ref_u)
    assert np.allclose(u, plant.params.hover_thrust, atol=1e-9)
    assert SimConfig.noiseless().motor_noise_coeff == 0.0
