import numpy as np
import pytest

from conftest import random_quad_state
from rtnmpc.config import load_default
from rtnmpc.dynamics import QuadParams, QuadrotorModel, rotate
from rtnmpc.exceptions import ConfigurationError, InputDomainError
from rtnmpc.integrator import rk4_step
from rtnmpc.ocp import OcpConfig, RtiController
from rtnmpc.residual import AnalyticDragResidual
from rtnmpc.sim import (
    FlightLog,
    QuadSimulator,
    SimConfig,
    Trajectory,
    collect_and_label,
    drag_acceleration,
    reference,
    reference_batch,
    reference_window,
    run_closed_loop,
    simulate_step,
    tracking_error,
    true_dynamics,
)

PARAMS = QuadParams.from_file()
PLANT = QuadrotorModel(PARAMS)


def quat_rate(q, w):
    a, b, c, d = q
    return 0.5 * np.array([-b * w[0] - c * w[1] - d * w[2], a * w[0] + c * w[2] - d * w[1],
                           a * w[1] - b * w[2] + d * w[0], a * w[2] + b * w[1] - c * w[0]])


@pytest.mark.parametrize("kind", ["circle", "lemniscate"])
def test_reference_kinematics_are_consistent(kind):
    traj = Trajectory(kind=kind, speed=6.0)
    ts = np.linspace(0.5, traj.duration - 0.5, 40)
    h = 1e-5
    p, v, a = traj.kinematics(ts)
    pp, vp, _ = traj.kinematics(ts + h)
    pm, vm, _ = traj.kinematics(ts - h)
    assert np.allclose((pp - pm) / (2 * h), v, atol=1e-5)
    assert np.allclose((vp - vm) / (2 * h), a, atol=1e-4)
    assert np.allclose(p[:, 2], traj.altitude)


def test_circle_speed_constant_after_ramp():
    traj = Trajectory(kind="circle", speed=7.0, radius=5.0)
    ts = np.linspace(traj.ramp_time, traj.duration, 50)
    _, v, _ = traj.kinematics(ts)
    assert np.allclose(np.linalg.norm(v, axis=1), 7.0)
    p, _, _ = traj.kinematics(ts)
    assert np.allclose(np.linalg.norm(p[:, :2], axis=1), 5.0)


def test_lemniscate_average_and_peak_speed():
    traj = Trajectory(kind="lemniscate", speed=7.0)
    ts = np.linspace(traj.ramp_time, traj.duration, 20001)
    p, v, _ = traj.kinematics(ts)
    dist = np.linalg.norm(np.diff(p, axis=0), axis=1).sum()
    assert np.isclose(dist / (ts[-1] - ts[0]), 7.0, rtol=1e-3)
    assert np.linalg.norm(v, axis=1).max() > 7.0


def test_ramp_starts_at_rest():
    traj = Trajectory(kind="circle", speed=7.0)
    _, v, a = traj.kinematics(np.array([0.0]))
    assert np.allclose(v, 0.0) and np.allclose(a, 0.0)


def test_reference_attitude_thrust_and_rates():
    traj = Trajectory(kind="lemniscate", speed=5.0)
    ts = np.linspace(1.0, traj.duration - 1.0, 25)
    X, U = reference_batch(traj, ts, PARAMS)
    _, _, acc = traj.kinematics(ts)
    thrust_dir = acc + np.array([0.0, 0.0, 9.81])
    for k in range(len(ts)):
        zb = rotate(X[k, 3:7], np.array([0.0, 0.0, 1.0]))
        assert np.allclose(zb, thrust_dir[k] / np.linalg.norm(thrust_dir[k]), atol=1e-10)
        assert np.allclose(U[k], PARAMS.mass * np.linalg.norm(thrust_dir[k]) / 4)
    h = 1e-5
    Xp, _ = reference_batch(traj, ts + h, PARAMS)
    Xm, _ = reference_batch(traj, ts - h, PARAMS)
    qdot = (Xp[:, 3:7] - Xm[:, 3:7]) / (2 * h)
    for k in range(len(ts)):
        assert np.allclose(quat_rate(X[k, 3:7], X[k, 10:13]), qdot[k], atol=1e-5)


def test_reference_domain():
    traj = Trajectory(speed=5.0)
    with pytest.raises(InputDomainError):
        reference(traj, -1.0, PARAMS)
    with pytest.raises(InputDomainError):
        reference(traj, traj.duration + 1.0, PARAMS)
    X, U = reference_window(traj, traj.duration - 0.05, 10, 0.1, PARAMS)
    assert X.shape == (11, 13) and U.shape == (10, 4)
    assert np.allclose(X[-1], X[-2])


def test_trajectory_validation():
    with pytest.raises(ConfigurationError):
        Trajectory(kind="square")
    with pytest.raises(ConfigurationError):
        Trajectory(speed=-1.0)


def test_scalar_simulator_matches_vectorized_dynamics(rng):
    cfg = SimConfig(noise_ft_mode="off", motor_noise_coeff=0.0)
    offset = rng.normal(scale=0.01, size=6)
    for _ in range(10):
        x = random_quad_state(rng)
        u = rng.uniform(0, 6, 4)
        ref = x.copy()
        for _ in range(cfg.substeps):
            ref = rk4_step(lambda s, w: true_dynamics(s, w, PARAMS, cfg.drag, offset), ref, u, cfg.sim_dt,
                           normalize=PLANT.normalize)
        assert np.allclose(simulate_step(x, u, cfg, PARAMS, offset), ref, atol=1e-12)


def test_hover_without_disturbances_stays_put():
    x = np.zeros(13)
    x[2], x[3] = 2.0, 1.0
    sim = QuadSimulator(SimConfig.noiseless(), PARAMS)
    for _ in range(100):
        x = sim.step(x, np.full(4, PARAMS.hover_thrust))
    assert np.allclose(x[:3], [0.0, 0.0, 2.0], atol=1e-12)


def test_drag_opposes_velocity(rng):
    for _ in range(10):
        x = random_quad_state(rng)
        assert drag_acceleration(x, np.array([0.3, 0.3, 0.15])) @ x[7:10] < 0


def test_noise_modes(rng):
    episode = QuadSimulator(SimConfig(seed=3), PARAMS)
    off0 = episode.ft_offset.copy()
    x = np.zeros(13)
    x[3] = 1.0
    episode.step(x, np.ones(4))
    assert np.array_equal(off0, episode.ft_offset)
    step = QuadSimulator(SimConfig(seed=3, noise_ft_mode="step"), PARAMS)
    first = step.ft_offset.copy()
    step.step(x, np.ones(4))
    assert not np.array_equal(first, step.ft_offset)
    assert QuadSimulator(SimConfig(noise_ft_mode="off"), PARAMS).ft_offset is None


def test_sim_config_validation():
    with pytest.raises(ConfigurationError):
        SimConfig(sim_dt=0.003, control_dt=0.01)
    with pytest.raises(ConfigurationError):
        SimConfig(noise_ft_mode="sometimes")


def _short_flight(seed, residual=None, kind="circle", speed=4.0, duration=4.0):
    ocp = OcpConfig.from_config(load_default("ocp_quad"), PLANT)
    sim = SimConfig.from_config(load_default("sim"), seed=seed)
    ctrl = RtiController(PLANT, ocp, residual, shift_fraction=sim.control_dt / ocp.dt)
    return run_closed_loop(ctrl, sim, Trajectory(kind=kind, speed=speed), duration=duration)


def test_closed_loop_is_deterministic_and_seeded():
    a, b, c = _short_flight(1), _short_flight(1), _short_flight(2)
    assert np.array_equal(a.states, b.states)
    assert not np.array_equal(a.states, c.states)
    assert not a.crashed and len(a) == 401


def test_perfect_model_tracks_better():
    nominal = _short_flight(0, duration=6.0, speed=6.0)
    perfect = _short_flight(0, AnalyticDragResidual([0.3, 0.3, 0.15]), duration=6.0, speed=6.0)
    assert tracking_error(perfect)[0] < 0.5 * tracking_error(nominal)[0]


def test_crash_detection():
    class Idle:
        plant = PLANT
        config = OcpConfig.from_config(load_default("ocp_quad"), PLANT)
        last_record = None

        def cycle(self, x, ref_x, ref_u):
            return np.zeros(4)

    flight = run_closed_loop(Idle(), SimConfig.noiseless(), Trajectory(speed=2.0))
    assert flight.crashed
    assert len(flight) < 300


def test_flight_csv_roundtrip(tmp_path):
    flight = _short_flight(0, duration=0.5)
    path = flight.write_csv(tmp_path / "f.csv")
    back = FlightLog.read_csv(path)
    assert np.array_equal(back.states, flight.states)
    assert np.array_equal(back.commands, flight.commands)
    assert back.meta["noise_ft_mode"] == "episode"
    no_timing = flight.write_csv(tmp_path / "g.csv", include_timing=False)
    assert "total_ms" not in no_timing.read_text()


def test_tracking_error_excludes_ramp():
    t = np.arange(10) * 0.5
    pos = np.zeros((10, 3))
    ref = np.zeros((10, 3))
    ref[:4, 0] = 100.0
    ref[4:, 0] = 1.0
    mean, series = tracking_error(pos, ref, t, ramp_time=2.0)
    assert mean == 1.0 and len(series) == 6


def test_labels_recover_drag_in_noiseless_flight():
    ocp = OcpConfig.from_config(load_default("ocp_quad"), PLANT)
    sim = SimConfig(noise_ft_mode="off", motor_noise_coeff=0.0)
    ctrl = RtiController(PLANT, ocp, shift_fraction=0.1)
    flight = run_closed_loop(ctrl, sim, Trajectory(speed=5.0), duration=5.0)
    ds = collect_and_label([flight], variant="a")
    truth = drag_acceleration(flight.states[:-1], sim.drag)
    # labels average the drag over one control period, so agreement is first order in control_dt
    assert np.abs(ds.labels - truth).max() < 0.05 * np.abs(truth).max()
    assert ds.feature_dim == 3 and len(ds) == len(flight) - 1
