"""Simplified quadrotor simulation, reference trajectories and residual labeling.

The simulated vehicle follows the nominal rigid-body model plus linear
body-frame drag, a constant (per-episode) force/torque offset and
multiplicative motor noise. The controller and the simulator alternate in
simulated time.
"""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .dynamics import (
    G as G_ACC,
    GRAVITY,
    NU_QUAD,
    NX_QUAD,
    P,
    Q,
    V,
    W,
    QuadParams,
    QuadrotorModel,
    _quad_f,
    normalize_quaternion_rows,
    residual_input,
    rotation_matrix,
)
from .exceptions import ConfigurationError, InputDomainError
from .integrator import rk4_step
from .neural.training import ResidualDataset

log = logging.getLogger(__name__)

NOISE_MODES = ("episode", "step", "off")
STATE_NAMES = ["px", "py", "pz", "qw", "qx", "qy", "qz", "vx", "vy", "vz", "wx", "wy", "wz"]


@dataclass
class SimConfig:
    drag: np.ndarray = field(default_factory=lambda: np.array([0.3, 0.3, 0.15]))
    noise_ft_sigma: float = 0.005
    noise_ft_mode: str = "episode"
    motor_noise_coeff: float = 0.02
    sim_dt: float = 0.001
    control_dt: float = 0.01
    seed: int = 0
    crash_distance: float = 20.0

    def __post_init__(self):
        self.drag = np.asarray(self.drag, dtype=float).reshape(3)
        if np.any(self.drag < 0) or self.noise_ft_sigma < 0 or self.motor_noise_coeff < 0:
            raise ConfigurationError("drag and noise coefficients must be nonnegative")
        if self.noise_ft_mode not in NOISE_MODES:
            raise ConfigurationError(f"noise_ft_mode must be one of {NOISE_MODES}")
        if not 0 < self.sim_dt <= self.control_dt:
            raise ConfigurationError("need 0 < sim_dt <= control_dt")
        ratio = self.control_dt / self.sim_dt
        if abs(ratio - round(ratio)) > 1e-9:
            raise ConfigurationError("control_dt must be an integer multiple of sim_dt")

    @property
    def substeps(self):
        return int(round(self.control_dt / self.sim_dt))

    @classmethod
    def from_config(cls, cfg, **overrides):
        table = dict(cfg.get("sim", cfg))
        table.update(overrides)
        return cls(**{k: table[k] for k in cls.__dataclass_fields__ if k in table})

    @classmethod
    def noiseless(cls, **kw):
        return cls(drag=np.zeros(3), noise_ft_sigma=0.0, noise_ft_mode="off", motor_noise_coeff=0.0, **kw)

    def header(self):
        return {
            "drag": ",".join(repr(float(d)) for d in self.drag),
            "noise_ft_sigma": self.noise_ft_sigma,
            "noise_ft_mode": self.noise_ft_mode,
            "motor_noise_coeff": self.motor_noise_coeff,
            "sim_dt": self.sim_dt,
            "control_dt": self.control_dt,
            "seed": self.seed,
        }


# ---------------------------------------------------------------------------
# reference trajectories


def _smooth_step(tau):
    tau = np.clip(tau, 0.0, 1.0)
    return tau ** 3 * (10.0 - 15.0 * tau + 6.0 * tau * tau)


def _smooth_step_integral(tau):
    tau = np.clip(tau, 0.0, 1.0)
    return tau ** 4 * (2.5 - 3.0 * tau + tau * tau)


def _lemniscate(theta, a):
    s, c = np.sin(theta), np.cos(theta)
    den = 1.0 + s * s
    return np.stack([a * c / den, a * s * c / den], axis=-1)


def _quat_from_matrix(R):
    """Scalar-first unit quaternions (nonnegative scalar part) from rotation matrices (..., 3, 3)."""
    R = np.asarray(R, dtype=float)
    m00, m11, m22 = R[..., 0, 0], R[..., 1, 1], R[..., 2, 2]
    # Shepperd: pick the numerically largest of the four squared components
    cand = np.stack([1 + m00 + m11 + m22, 1 + m00 - m11 - m22, 1 - m00 + m11 - m22, 1 - m00 - m11 + m22], -1)
    idx = np.argmax(cand, axis=-1)
    s = 2.0 * np.sqrt(np.take_along_axis(cand, idx[..., None], -1)[..., 0])
    d21, d02, d10 = R[..., 2, 1] - R[..., 1, 2], R[..., 0, 2] - R[..., 2, 0], R[..., 1, 0] - R[..., 0, 1]
    s01, s02, s12 = R[..., 0, 1] + R[..., 1, 0], R[..., 0, 2] + R[..., 2, 0], R[..., 1, 2] + R[..., 2, 1]
    q = np.stack([
        np.choose(idx, [0.25 * s, d21 / s, d02 / s, d10 / s]),
        np.choose(idx, [d21 / s, 0.25 * s, s01 / s, s02 / s]),
        np.choose(idx, [d02 / s, s01 / s, 0.25 * s, s12 / s]),
        np.choose(idx, [d10 / s, s02 / s, s12 / s, 0.25 * s]),
    ], -1)
    q = np.where(q[..., :1] < 0, -q, q)
    return q / np.linalg.norm(q, axis=-1, keepdims=True)


def _attitude_from_accel(acc):
    """Yaw-zero attitudes whose thrust axis points along ``acc - g``; returns ``(R, |acc - g|)``."""
    thrust = np.asarray(acc, dtype=float) - GRAVITY
    norm = np.linalg.norm(thrust, axis=-1, keepdims=True)
    zb = thrust / norm
    # y_B = z_B x e_x, normalized
    yb = np.stack([np.zeros_like(zb[..., 0]), zb[..., 2], -zb[..., 1]], -1)
    yb /= np.linalg.norm(yb, axis=-1, keepdims=True)
    xb = np.cross(yb, zb)
    return np.stack([xb, yb, zb], axis=-1), norm[..., 0]


@dataclass
class Trajectory:
    """Horizontal circle or Bernoulli lemniscate flown at a target average speed.

    The phase rate is constant after a smooth ``ramp_time`` ramp-in, so on
    the lemniscate the speed varies along the path and exceeds the average
    in the lobes' straight sections.
    """

    kind: str = "circle"
    speed: float = 7.0
    radius: float = 5.0
    altitude: float = 2.0
    ramp_time: float = 3.0
    laps: float = 1.0

    def __post_init__(self):
        if self.kind not in ("circle", "lemniscate"):
            raise ConfigurationError(f"unknown trajectory kind {self.kind!r}")
        if not self.speed > 0 or not self.radius > 0 or not self.laps > 0 or self.ramp_time < 0:
            raise ConfigurationError("speed, radius and laps must be positive, ramp_time nonnegative")
        self.lap_length = self._lap_length()
        self.theta_rate = 2.0 * math.pi * self.speed / self.lap_length

    @classmethod
    def from_config(cls, cfg, **overrides):
        table = dict(cfg.get("trajectory", cfg))
        table.update({k: v for k, v in overrides.items() if v is not None})
        return cls(**{k: table[k] for k in cls.__dataclass_fields__ if k in table})

    def _lap_length(self):
        if self.kind == "circle":
            return 2.0 * math.pi * self.radius
        th = np.linspace(0.0, 2.0 * math.pi, 20001)
        xy = _lemniscate(th, self.radius)
        return float(np.sum(np.linalg.norm(np.diff(xy, axis=0), axis=1)))

    @property
    def lap_time(self):
        return 2.0 * math.pi / self.theta_rate

    @property
    def duration(self):
        return self.ramp_time + self.laps * self.lap_time

    def phase(self, t):
        """Phase angle and its first two time derivatives (``t`` may be an array)."""
        t = np.asarray(t, dtype=float)
        w, T = self.theta_rate, self.ramp_time
        if T > 0:
            tau = np.clip(t / T, 0.0, 1.0)
            ramp = t < T
            th = np.where(ramp, w * T * _smooth_step_integral(tau), w * (0.5 * T + t - T))
            thd = np.where(ramp, w * _smooth_step(tau), w)
            thdd = np.where(ramp, w / T * 30.0 * tau * tau * (1.0 - tau) ** 2, 0.0)
            return th, thd, thdd
        return w * t, np.full_like(t, w), np.zeros_like(t)

    def path(self, theta):
        """Path point and its first two derivatives with respect to the phase."""
        theta = np.asarray(theta, dtype=float)
        z = np.full_like(theta, self.altitude)
        zero = np.zeros_like(theta)
        s, c = np.sin(theta), np.cos(theta)
        if self.kind == "circle":
            r = self.radius
            p = np.stack([r * c, r * s, z], -1)
            d1 = np.stack([-r * s, r * c, zero], -1)
            d2 = np.stack([-r * c, -r * s, zero], -1)
            return p, d1, d2
        a = self.radius
        den = 1.0 + s * s
        x, y = a * c / den, a * s * c / den
        dden = 2.0 * s * c
        ddden = 2.0 * (c * c - s * s)
        dnx, dny = -a * s, a * (c * c - s * s)
        ddnx, ddny = -a * c, -4.0 * a * s * c
        dx = (dnx - x * dden) / den
        dy = (dny - y * dden) / den
        ddx = (ddnx - 2.0 * dx * dden - x * ddden) / den
        ddy = (ddny - 2.0 * dy * dden - y * ddden) / den
        return np.stack([x, y, z], -1), np.stack([dx, dy, zero], -1), np.stack([ddx, ddy, zero], -1)

    def position(self, theta):
        return self.path(theta)[0]

    def kinematics(self, t):
        """Position, velocity and acceleration at time(s) ``t``."""
        th, thd, thdd = self.phase(t)
        p, d1, d2 = self.path(th)
        thd, thdd = np.asarray(thd)[..., None], np.asarray(thdd)[..., None]
        return p, d1 * thd, d2 * thd * thd + d1 * thdd


def reference_batch(traj, ts, params):
    """Vectorized :func:`reference` over an array of times."""
    ts = np.atleast_1d(np.asarray(ts, dtype=float))
    if np.any(ts < -1e-12) or np.any(ts > traj.duration + 1e-12):
        raise InputDomainError(f"times outside [0, {traj.duration}]")
    p, v, a = traj.kinematics(ts)
    R, thrust_acc = _attitude_from_accel(a)
    h = 1e-4
    Rp = _attitude_from_accel(traj.kinematics(ts + h)[2])[0]
    tm = np.maximum(ts - h, 0.0)
    Rm = _attitude_from_accel(traj.kinematics(tm)[2])[0]
    dR = (Rp - Rm) / (ts + h - tm)[:, None, None]
    Om = np.swapaxes(R, -1, -2) @ dR
    omega = 0.5 * np.stack([Om[:, 2, 1] - Om[:, 1, 2], Om[:, 0, 2] - Om[:, 2, 0], Om[:, 1, 0] - Om[:, 0, 1]], -1)
    X = np.concatenate([p, _quat_from_matrix(R), v, omega], axis=1)
    U = np.repeat((params.mass * thrust_acc / NU_QUAD)[:, None], NU_QUAD, axis=1)
    return X, U


def reference(traj, t, params):
    """State and input reference at time ``t``.

    Attitude from differential flatness with zero yaw, body rates by central
    differences of the attitude, input reference = the collective thrust the
    reference acceleration requires, split evenly across rotors.
    """
    if not -1e-12 <= t <= traj.duration + 1e-12:
        raise InputDomainError(f"t = {t} outside [0, {traj.duration}]")
    X, U = reference_batch(traj, [t], params)
    return X[0], U[0]


def reference_window(traj, t, N, dt, params):
    """References at ``t + k dt``, k = 0..N; times past the end are clamped."""
    ts = np.minimum(t + dt * np.arange(N + 1), traj.duration)
    X, U = reference_batch(traj, ts, params)
    return X, U[:N]


class ReferenceTable:
    """Reference samples precomputed on the control grid for one flight."""

    def __init__(self, traj, control_dt, n_steps, N, dt, params):
        self.ratio = dt / control_dt
        self.N = N
        self.exact = abs(self.ratio - round(self.ratio)) < 1e-9
        self.traj, self.dt, self.params, self.control_dt = traj, dt, params, control_dt
        if self.exact:
            self.ratio = int(round(self.ratio))
            j = np.arange(n_steps + N * self.ratio + 1)
            self.X, self.U = reference_batch(traj, np.minimum(j * control_dt, traj.duration), params)

    def window(self, n):
        if not self.exact:
            return reference_window(self.traj, n * self.control_dt, self.N, self.dt, self.params)
        idx = n + self.ratio * np.arange(self.N + 1)
        return self.X[idx], self.U[idx[:-1]]


# ---------------------------------------------------------------------------
# simulation


def drag_acceleration(x, drag):
    """World-frame acceleration of the linear body-frame drag ``-R D R^T v``."""
    R = rotation_matrix(x[..., Q])
    vb = np.einsum("...ba,...b->...a", R, x[..., V])
    return -np.einsum("...ab,...b->...a", R, drag * vb)


def true_dynamics(x, u, params, drag, ft_offset=None):
    out = _quad_f(x, u, params)
    out[..., V] += drag_acceleration(x, drag)
    if ft_offset is not None:
        out[..., V] += ft_offset[:3]
        out[..., W] += ft_offset[3:]
    return out


def _plant_rk4(x, wrench, consts, h, steps):
    """Scalar RK4 of the true plant; plain floats keep the per-step cost low."""
    m, Jx, Jy, Jz, dx, dy, dz, ax0, ay0, az0, bx0, by0, bz0 = consts
    c = wrench[0] / m
    tx = wrench[1] / Jx + bx0
    ty = wrench[2] / Jy + by0
    tz = wrench[3] / Jz + bz0
    g = G_ACC

    def deriv(s):
        _, _, _, w, qx, qy, qz, vx, vy, vz, ox, oy, oz = s
        r00 = 1.0 - 2.0 * (qy * qy + qz * qz)
        r01 = 2.0 * (qx * qy - w * qz)
        r02 = 2.0 * (qx * qz + w * qy)
        r10 = 2.0 * (qx * qy + w * qz)
        r11 = 1.0 - 2.0 * (qx * qx + qz * qz)
        r12 = 2.0 * (qy * qz - w * qx)
        r20 = 2.0 * (qx * qz - w * qy)
        r21 = 2.0 * (qy * qz + w * qx)
        r22 = 1.0 - 2.0 * (qx * qx + qy * qy)
        # drag: -R D R^T v
        bx = dx * (r00 * vx + r10 * vy + r20 * vz)
        by = dy * (r01 * vx + r11 * vy + r21 * vz)
        bz = dz * (r02 * vx + r12 * vy + r22 * vz)
        return (
            vx, vy, vz,
            0.5 * (-ox * qx - oy * qy - oz * qz),
            0.5 * (ox * w + oz * qy - oy * qz),
            0.5 * (oy * w - oz * qx + ox * qz),
            0.5 * (oz * w + oy * qx - ox * qy),
            c * r02 - (r00 * bx + r01 * by + r02 * bz) + ax0,
            c * r12 - (r10 * bx + r11 * by + r12 * bz) + ay0,
            c * r22 - (r20 * bx + r21 * by + r22 * bz) - g + az0,
            tx - (Jz - Jy) * oy * oz / Jx,
            ty - (Jx - Jz) * oz * ox / Jy,
            tz - (Jy - Jx) * ox * oy / Jz,
        )

    s = list(x)
    for _ in range(steps):
        k1 = deriv(s)
        k2 = deriv([a + 0.5 * h * b for a, b in zip(s, k1)])
        k3 = deriv([a + 0.5 * h * b for a, b in zip(s, k2)])
        k4 = deriv([a + h * b for a, b in zip(s, k3)])
        s = [a + h / 6.0 * (b1 + 2.0 * b2 + 2.0 * b3 + b4) for a, b1, b2, b3, b4 in zip(s, k1, k2, k3, k4)]
        n = math.sqrt(s[3] * s[3] + s[4] * s[4] + s[5] * s[5] + s[6] * s[6])
        s[3:7] = [qi / n for qi in s[3:7]]
    return s


def simulate_step(state, u, config, params=None, ft_offset=None, rng=None):
    """Advance one control period with ``config.substeps`` RK4 steps.

    ``ft_offset`` is a (6,) linear/angular acceleration offset; motor noise
    is drawn from ``rng`` when given and ``motor_noise_coeff > 0``. Thrusts
    are held constant over the period.
    """
    params = params if params is not None else QuadParams.from_file()
    x = np.asarray(state, dtype=float)
    u = np.asarray(u, dtype=float)
    if x.shape != (NX_QUAD,) or u.shape != (NU_QUAD,):
        raise ConfigurationError(f"bad shapes x{x.shape} u{u.shape}")
    if rng is not None and config.motor_noise_coeff > 0:
        u = u + config.motor_noise_coeff * np.sqrt(np.maximum(u, 0.0)) * rng.standard_normal(u.shape)
    u = np.maximum(u, 0.0)
    off = np.zeros(6) if ft_offset is None else np.asarray(ft_offset, dtype=float)
    consts = (params.mass, *params.inertia, *config.drag, *off)
    wrench = (params.mixing_matrix @ u).tolist()
    out = _plant_rk4(x.tolist(), wrench, tuple(float(c) for c in consts), config.sim_dt, config.substeps)
    return np.array(out)


class QuadSimulator:
    """Stateful wrapper owning the noise stream of one episode."""

    def __init__(self, config, params=None):
        self.config = config
        self.params = params if params is not None else QuadParams.from_file()
        self.rng = np.random.default_rng(config.seed)
        self.ft_offset = self._draw_offset()

    def _draw_offset(self):
        if self.config.noise_ft_mode == "off" or self.config.noise_ft_sigma == 0:
            return None
        return self.config.noise_ft_sigma * self.rng.standard_normal(6)

    def step(self, x, u):
        if self.config.noise_ft_mode == "step":
            self.ft_offset = self._draw_offset()
        rng = self.rng if self.config.motor_noise_coeff > 0 else None
        return simulate_step(x, u, self.config, self.params, self.ft_offset, rng)


# ---------------------------------------------------------------------------
# flight logs


TIMING_FIELDS = ("prep_dd_ms", "prep_qp_ms", "feedback_ms", "total_ms")


@dataclass(eq=False)
class FlightLog:
    t: np.ndarray
    states: np.ndarray
    commands: np.ndarray
    refs: np.ndarray
    telemetry: list
    ramp_time: float = 0.0
    crashed: bool = False
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        n = len(self.t)
        if not (len(self.states) == len(self.commands) == len(self.refs) == n):
            raise ConfigurationError("flight log columns must have equal lengths")

    def __len__(self):
        return len(self.t)

    def write_csv(self, path, include_timing=True):
        """CSV with ``#``-prefixed metadata lines, then one row per control cycle."""
        header = ["t", *STATE_NAMES, *[f"u{i}" for i in range(NU_QUAD)], *[f"ref_{n}" for n in STATE_NAMES],
                  "qp_iterations", "status"]
        if include_timing:
            header += list(TIMING_FIELDS)
        with open(path, "w", newline="") as fh:
            for key in sorted(self.meta):
                fh.write(f"# {key}={self.meta[key]}\n")
            fh.write(f"# crashed={self.crashed}\n")
            w = csv.writer(fh)
            w.writerow(header)
            for i in range(len(self)):
                rec = self.telemetry[i] if i < len(self.telemetry) else None
                row = [repr(float(self.t[i]))]
                row += [repr(float(v)) for v in self.states[i]]
                row += [repr(float(v)) for v in self.commands[i]]
                row += [repr(float(v)) for v in self.refs[i]]
                row += [rec.qp_iterations if rec else 0, rec.status if rec else ""]
                if include_timing:
                    row += [f"{getattr(rec, n):.4f}" if rec else "" for n in TIMING_FIELDS]
                w.writerow(row)
        return path

    @classmethod
    def read_csv(cls, path):
        meta, rows = {}, []
        with open(path, newline="") as fh:
            lines = fh.read().splitlines()
        body = [ln for ln in lines if not ln.startswith("#")]
        for ln in lines:
            if ln.startswith("# ") and "=" in ln:
                k, v = ln[2:].split("=", 1)
                meta[k] = v
        reader = csv.DictReader(body)
        for row in reader:
            rows.append(row)
        t = np.array([float(r["t"]) for r in rows])
        states = np.array([[float(r[n]) for n in STATE_NAMES] for r in rows]).reshape(-1, NX_QUAD)
        cmds = np.array([[float(r[f"u{i}"]) for i in range(NU_QUAD)] for r in rows]).reshape(-1, NU_QUAD)
        refs = np.array([[float(r[f"ref_{n}"]) for n in STATE_NAMES] for r in rows]).reshape(-1, NX_QUAD)
        crashed = meta.pop("crashed", "False") == "True"
        ramp = float(meta.get("ramp_time", 0.0))
        return cls(t, states, cmds, refs, [], ramp, crashed, meta)


def run_closed_loop(controller, config, traj, params=None, duration=None):
    """Fly ``traj`` with ``controller`` in the simplified simulation.

    The run stops early (``crashed=True``) when the state becomes non-finite,
    the position error exceeds ``config.crash_distance`` or ten consecutive
    controller cycles fail.
    """
    params = params if params is not None else controller.plant.params
    sim = QuadSimulator(config, params)
    ocp = controller.config
    duration = traj.duration if duration is None else duration
    n_steps = int(math.floor(duration / config.control_dt + 1e-9)) + 1
    table = ReferenceTable(traj, config.control_dt, n_steps, ocp.N, ocp.dt, params)
    x = table.X[0].copy() if table.exact else reference(traj, 0.0, params)[0]
    ts, xs, us, refs, tele = [], [], [], [], []
    crashed = False
    fails = 0
    for n in range(n_steps):
        t = n * config.control_dt
        ref_x, ref_u = table.window(n)
        u = controller.cycle(x, ref_x, ref_u)
        rec = controller.last_record
        ts.append(t)
        xs.append(x.copy())
        us.append(np.array(u, dtype=float))
        refs.append(ref_x[0])
        tele.append(rec)
        fails = fails + 1 if rec is not None and rec.status == "failed" else 0
        if fails >= 10:
            crashed = True
            break
        x = sim.step(x, u)
        if not np.all(np.isfinite(x)) or np.linalg.norm(x[P] - ref_x[0, P]) > config.crash_distance:
            crashed = True
            break
    if crashed:
        log.warning("flight crashed at t = %.2f s", ts[-1])
    meta = {**config.header(), "trajectory": traj.kind, "speed": traj.speed, "radius": traj.radius,
            "ramp_time": traj.ramp_time, "mode": ocp.mode}
    return FlightLog(np.array(ts), np.array(xs), np.array(us), np.array(refs), tele, traj.ramp_time, crashed, meta)


def tracking_error(log_or_positions, ref_positions=None, t=None, ramp_time=0.0):
    """Mean Euclidean position error with the ramp-in excluded; returns ``(mean, series)``.

    Accepts a :class:`FlightLog` or raw ``(positions, reference positions)``
    arrays (then ``t``/``ramp_time`` select the samples).
    """
    if isinstance(log_or_positions, FlightLog):
        lg = log_or_positions
        pos, ref, t, ramp_time = lg.states[:, P], lg.refs[:, P], lg.t, lg.ramp_time
    else:
        pos = np.asarray(log_or_positions, dtype=float)
        ref = np.asarray(ref_positions, dtype=float)
        if pos.ndim == 1:
            pos, ref = pos[:, None], ref[:, None]
    if len(pos) == 0:
        raise ConfigurationError("empty log")
    err = np.linalg.norm(pos - ref, axis=1)
    if t is not None:
        keep = np.asarray(t) >= ramp_time - 1e-12
        if not keep.any():
            raise ConfigurationError("no samples after the ramp-in")
        err = err[keep]
    return float(err.mean()), err


def collect_and_label(logs, dt=None, variant="a", params=None, validation_fraction=0.1, seed=0):
    """Residual labels from consecutive logged samples.

    ``label = ((x_{k+1} - rk4(f_nominal, x_k, u_k, dt)) / dt)`` restricted to
    the variant's output rows; features from :func:`residual_input`.
    """
    plant = QuadrotorModel(params)
    rows = list(plant.output_rows(variant))
    feats, labels = [], []
    for lg in logs:
        if len(lg) < 2:
            continue
        steps = np.diff(lg.t)
        step = steps[0] if dt is None else dt
        if np.abs(steps - step).max() > 1e-9:
            raise ConfigurationError("flight log timestamps are not uniform")
        X, U = lg.states[:-1], lg.commands[:-1]
        pred = rk4_step(plant.f, X, U, step, normalize=plant.normalize)
        labels.append(((lg.states[1:] - pred) / step)[:, rows])
        feats.append(residual_input(X, U, variant))
    if not feats:
        raise ConfigurationError("no usable samples in the given logs")
    return ResidualDataset.with_random_split(np.vstack(feats), np.vstack(labels), validation_fraction, seed, variant)


@dataclass
class CollectConfig:
    n_points: int = 20000
    kinds: tuple = ("circle", "lemniscate")
    speed_min: float = 2.0
    speed_max: float = 12.0
    radius_min: float = 4.0
    radius_max: float = 6.0
    variant: str = "a"
    seed: int = 100

    @classmethod
    def from_config(cls, cfg, **overrides):
        table = dict(cfg.get("collect", cfg))
        table.update({k: v for k, v in overrides.items() if v is not None})
        return cls(**{k: table[k] for k in cls.__dataclass_fields__ if k in table})


def collect_flights(controller_factory, sim_config, collect, traj_defaults=None):
    """Fly randomized trajectories with fresh nominal controllers until enough samples exist.

    Returns the list of flight logs; flight ``i`` uses simulator seed
    ``collect.seed + i`` and draws its trajectory from the same stream.
    """
    rng = np.random.default_rng(collect.seed)
    traj_defaults = dict(traj_defaults or {})
    logs, total, i = [], 0, 0
    while total < collect.n_points:
        kind = collect.kinds[int(rng.integers(len(collect.kinds)))]
        speed = float(rng.uniform(collect.speed_min, collect.speed_max))
        radius = float(rng.uniform(collect.radius_min, collect.radius_max))
        traj = Trajectory(**{**traj_defaults, "kind": kind, "speed": speed, "radius": radius})
        cfg = SimConfig(**{**sim_config.__dict__, "seed": collect.seed + i})
        lg = run_closed_loop(controller_factory(), cfg, traj)
        logs.append(lg)
        total += max(len(lg) - 1, 0)
        i += 1
        log.info("collected flight %d (%s, %.1f m/s): %d samples total", i, kind, speed, total)
    return logs


def truncate_dataset(dataset, n_points, validation_fraction=0.1, seed=0):
    """Keep the first ``n_points`` samples with a fresh random split."""
    n = min(n_points, len(dataset))
    return ResidualDataset.with_random_split(dataset.inputs[:n], dataset.labels[:n], validation_fraction, seed,
                                             dataset.variant)
