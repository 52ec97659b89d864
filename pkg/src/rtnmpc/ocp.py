"""Multiple-shooting OCP and the real-time iteration (RTI) controller.

One SQP iteration per control cycle, split into

* data-driven dynamics preparation: batched local expansions of the
  residual network at all shooting nodes (``rtn`` mode only),
* QP preparation: RK4 continuity parameters, Gauss-Newton cost blocks
  and condensing,
* feedback: insert the measured state, solve the box QP, apply the full
  step and shift the iterate as the warm start for the next cycle.

In ``naive`` mode the network is evaluated inside every RK4 stage of every
node instead.
"""

from __future__ import annotations

import csv
import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .exceptions import ConfigurationError, PropagationError, QpSolveError
from .integrator import EvalCounter, rk4_sensitivities
from .qp import condense, solve_box_qp
from .taylor import TaylorStack, prepare_nodes

log = logging.getLogger(__name__)

MODES = ("rtn", "naive")


@dataclass
class OcpConfig:
    N: int
    dt: float
    Q: np.ndarray
    R: np.ndarray
    u_min: np.ndarray
    u_max: np.ndarray
    mode: str = "rtn"
    residual_variant: str = "a"
    taylor_order: int = 1

    def __post_init__(self):
        self.Q = np.asarray(self.Q, dtype=float).reshape(-1)
        self.R = np.asarray(self.R, dtype=float).reshape(-1)
        self.u_min = np.asarray(self.u_min, dtype=float).reshape(-1)
        self.u_max = np.asarray(self.u_max, dtype=float).reshape(-1)
        if int(self.N) != self.N or self.N < 1:
            raise ConfigurationError("N must be a positive integer")
        self.N = int(self.N)
        if not self.dt > 0:
            raise ConfigurationError("dt must be positive")
        if np.any(self.Q < 0) or np.any(self.R < 0):
            raise ConfigurationError("cost weights must be nonnegative")
        if self.u_min.shape != self.u_max.shape or self.u_min.shape != self.R.shape:
            raise ConfigurationError("input bounds and R must have one entry per input")
        if np.any(self.u_min >= self.u_max):
            raise ConfigurationError("u_min must be strictly below u_max")
        if self.mode not in MODES:
            raise ConfigurationError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.taylor_order not in (1, 2):
            raise ConfigurationError("taylor_order must be 1 or 2")

    @property
    def nx(self):
        return len(self.Q)

    @property
    def nu(self):
        return len(self.R)

    @classmethod
    def from_config(cls, cfg, plant=None, **overrides):
        table = dict(cfg.get("ocp", cfg))
        table.update(overrides)
        if "u_max" not in table:
            if plant is None:
                raise ConfigurationError("u_max missing and no plant given")
            table["u_max"] = plant.input_bounds()[1]
        if "u_min" not in table and plant is not None:
            table["u_min"] = plant.input_bounds()[0]
        known = {k: table[k] for k in cls.__dataclass_fields__ if k in table}
        out = cls(**known)
        if plant is not None and (out.nx != plant.nx or out.nu != plant.nu):
            raise ConfigurationError(f"weights sized ({out.nx}, {out.nu}) but plant is ({plant.nx}, {plant.nu})")
        return out


@dataclass(eq=False)
class Iterate:
    xs: np.ndarray
    us: np.ndarray

    def __post_init__(self):
        self.xs = np.array(self.xs, dtype=float)
        self.us = np.array(self.us, dtype=float)
        if self.xs.ndim != 2 or self.us.ndim != 2 or len(self.xs) != len(self.us) + 1:
            raise ConfigurationError(f"iterate needs N+1 states and N controls, got {self.xs.shape}, {self.us.shape}")

    @property
    def N(self):
        return len(self.us)

    def copy(self):
        return Iterate(self.xs.copy(), self.us.copy())

    def shifted(self, fraction=1.0, normalize=None):
        """Shift forward by ``fraction`` of a node; the last node is duplicated.

        ``fraction = 1`` is the classic shift-and-duplicate-last warm start,
        smaller values interpolate linearly between neighbouring nodes.
        """
        if not 0 < fraction <= 1:
            raise ConfigurationError("shift fraction must lie in (0, 1]")
        xs = np.vstack([self.xs[1:], self.xs[-1:]])
        us = np.vstack([self.us[1:], self.us[-1:]])
        if fraction < 1:
            xs = (1 - fraction) * self.xs + fraction * xs
            us = (1 - fraction) * self.us + fraction * us
        if normalize is not None:
            xs = normalize(xs)
        return Iterate(xs, us)


@dataclass(eq=False)
class QpData:
    """Linearized shooting QP around an iterate (see :mod:`rtnmpc.qp`)."""

    A: np.ndarray
    B: np.ndarray
    phi_bar: np.ndarray
    xs: np.ndarray
    us: np.ndarray
    q: np.ndarray
    r: np.ndarray
    Hxx: np.ndarray
    Hxu: np.ndarray
    Huu: np.ndarray
    lbu: np.ndarray
    ubu: np.ndarray
    Gx: np.ndarray = None
    Gu: np.ndarray = None
    g_bar: np.ndarray = None

    def __post_init__(self):
        N, nx, nu = self.B.shape
        expect = {
            "A": (N, nx, nx), "phi_bar": (N, nx), "xs": (N + 1, nx), "us": (N, nu), "q": (N + 1, nx),
            "r": (N, nu), "Hxx": (N + 1, nx, nx), "Hxu": (N, nx, nu), "Huu": (N, nu, nu),
            "lbu": (N, nu), "ubu": (N, nu),
        }
        for name, shape in expect.items():
            if getattr(self, name).shape != shape:
                raise ConfigurationError(f"QpData.{name} has shape {getattr(self, name).shape}, expected {shape}")

    @property
    def N(self):
        return self.B.shape[0]

    @property
    def defects(self):
        return self.phi_bar - self.xs[1:]

    @property
    def has_general_constraints(self):
        return any(g is not None and np.size(g) for g in (self.Gx, self.Gu, self.g_bar))

    def max_difference(self, other):
        names = ("A", "B", "phi_bar", "q", "r", "Hxx", "Hxu", "Huu", "lbu", "ubu")
        return max(np.abs(getattr(self, n) - getattr(other, n)).max() for n in names)


def init_iterate(plant, x0, ref_x, ref_u=None):
    """States follow the reference with the first pinned to ``x0``; controls are the steady input."""
    ref_x = np.asarray(ref_x, dtype=float)
    xs = ref_x.copy()
    xs[0] = np.asarray(x0, dtype=float)
    xs = plant.normalize(xs)
    xs[0] = np.asarray(x0, dtype=float)
    us = np.tile(plant.steady_input(x0), (len(ref_x) - 1, 1))
    return Iterate(xs, us)


def _check_reference(config, ref_x, ref_u):
    ref_x = np.asarray(ref_x, dtype=float)
    ref_u = np.asarray(ref_u, dtype=float)
    if ref_x.shape != (config.N + 1, config.nx) or ref_u.shape != (config.N, config.nu):
        raise ConfigurationError(
            f"reference window must be ({config.N + 1}, {config.nx}) states and ({config.N}, {config.nu}) inputs"
        )
    return ref_x, ref_u


def _stage_functions(plant, residual, approxes, mode, counter):
    """Continuous dynamics ``f`` and ``df`` on the stacked horizon for the given mode."""
    if residual is None and approxes is None:
        return plant.f, plant.jacobians
    nx = plant.nx
    if mode == "rtn":
        if approxes is None:
            raise ConfigurationError("rtn mode needs prepared Taylor approximations")
        stack = approxes if isinstance(approxes, TaylorStack) else TaylorStack(approxes)
        rows = list(residual.rows) if residual is not None else None
        if rows is None:
            raise ConfigurationError("rtn mode needs the residual handle for its output rows")

        def f(X, U):
            out = plant.f(X, U)
            out[:, rows] += stack.value(np.concatenate([X, U], axis=1))
            return out

        def df(X, U):
            fx, fu = plant.jacobians(X, U)
            J = stack.jacobian(np.concatenate([X, U], axis=1))
            fx[:, rows] += J[:, :, :nx]
            fu[:, rows] += J[:, :, nx:]
            return fx, fu

        return f, df

    rows = list(residual.rows)

    def f(X, U):
        out = plant.f(X, U)
        for k in range(len(X)):
            out[k, rows] += residual.value(X[k], U[k])
        return out

    def df(X, U):
        fx, fu = plant.jacobians(X, U)
        for k in range(len(X)):
            J = residual.jacobian(X[k], U[k])
            fx[k, rows] += J[:, :nx]
            fu[k, rows] += J[:, nx:]
        return fx, fu

    return f, df


def build_qp(plant, iterate, config, ref_x, ref_u, approxes=None, residual=None, counter=None):
    """Linearize the shooting problem around ``iterate``.

    ``rtn`` mode needs ``approxes`` (from :func:`prepare_nodes`) plus the
    residual handle for its output rows; ``naive`` mode evaluates
    ``residual`` directly inside the RK4 stages. With no residual both modes
    reduce to the nominal model.
    """
    ref_x, ref_u = _check_reference(config, ref_x, ref_u)
    if iterate.N != config.N:
        raise ConfigurationError(f"iterate has {iterate.N} nodes, config expects {config.N}")
    if config.mode == "rtn" and residual is not None and approxes is None:
        raise ConfigurationError("rtn mode needs prepared Taylor approximations")
    f, df = _stage_functions(plant, residual, approxes if config.mode == "rtn" else None, config.mode, counter)
    X, U = iterate.xs[:-1], iterate.us
    sens = rk4_sensitivities(f, df, X, U, config.dt, normalize=plant.normalize, counter=counter)

    N, nx, nu = config.N, config.nx, config.nu
    Qd, Rd = np.diag(config.Q), np.diag(config.R)
    q = 2.0 * (iterate.xs - ref_x) * config.Q
    r = 2.0 * (iterate.us - ref_u) * config.R
    Hxx = np.broadcast_to(2.0 * Qd, (N + 1, nx, nx)).copy()
    Huu = np.broadcast_to(2.0 * Rd, (N, nu, nu)).copy()
    Hxu = np.zeros((N, nx, nu))
    lbu = config.u_min - iterate.us
    ubu = config.u_max - iterate.us
    return QpData(sens.A, sens.B, sens.phi_bar, iterate.xs.copy(), iterate.us.copy(), q, r, Hxx, Hxu, Huu, lbu, ubu)


@dataclass(eq=False)
class FeedbackResult:
    dxs: np.ndarray
    dus: np.ndarray
    u_command: np.ndarray
    status: str
    iterations: int
    active: np.ndarray
    lam_lb: np.ndarray
    lam_ub: np.ndarray


def _apply_bounds_exactly(us, active, u_min, u_max):
    act = active.reshape(us.shape)
    us = us.copy()
    lo, hi = act < 0, act > 0
    us[lo] = np.broadcast_to(u_min, us.shape)[lo]
    us[hi] = np.broadcast_to(u_max, us.shape)[hi]
    return us


def solve_feedback(qp, x_measured, iterate=None, condensed=None, warm_start=None, config=None, fallback=None):
    """Insert ``x_measured``, solve the QP and return the full step and the command.

    ``condensed`` may carry the condensing precomputed during preparation.
    Components whose bound is active are returned exactly at the bound.
    """
    cqp = condensed if condensed is not None else condense(qp)
    cqp = cqp.with_x0(x_measured)
    res = solve_box_qp(cqp, warm_start=warm_start)
    if not res.ok or not np.all(np.isfinite(res.x)):
        raise QpSolveError(f"box QP failed with status {res.status}", status=res.status, fallback_command=fallback)
    dus = res.x.reshape(qp.N, -1)
    dxs = cqp.recover_states(res.x)
    us = qp.us + dus
    if config is not None:
        us = _apply_bounds_exactly(us, res.active, config.u_min, config.u_max)
    else:
        us = _apply_bounds_exactly(us, res.active, qp.us + qp.lbu, qp.us + qp.ubu)
    return FeedbackResult(dxs, us - qp.us, us[0].copy(), res.status, res.iterations, res.active,
                          res.lam_lb, res.lam_ub)


@dataclass
class CycleRecord:
    cycle: int
    prep_dd_ms: float
    prep_qp_ms: float
    feedback_ms: float
    qp_iterations: int
    status: str
    counters: dict
    command: np.ndarray
    measured: np.ndarray

    @property
    def total_ms(self):
        return self.prep_dd_ms + self.prep_qp_ms + self.feedback_ms


TIMING_COLUMNS = ("prep_dd_ms", "prep_qp_ms", "feedback_ms", "total_ms")


class RtiController:
    """Real-time iteration controller with optional learned residual.

    Parameters
    ----------
    plant : QuadrotorModel or DoubleIntegratorModel
    config : OcpConfig
    residual : residual provider or None
        :class:`~rtnmpc.residual.NetworkResidual` or another provider with
        the same interface. ``None`` runs the nominal model.
    shift_fraction : float
        Fraction of a shooting interval the iterate is shifted per cycle
        (control period / dt).
    parallel_prep : bool
        Run the data-driven preparation on a worker thread while the cost
        blocks are assembled.
    """

    def __init__(self, plant, config, residual=None, counter=None, shift_fraction=1.0, parallel_prep=False):
        self.plant = plant
        self.config = config
        self.residual = residual
        self.counter = counter if counter is not None else EvalCounter()
        if residual is not None and getattr(residual, "counter", None) is None:
            residual.counter = self.counter
        if residual is not None and getattr(residual, "variant", config.residual_variant) != config.residual_variant:
            raise ConfigurationError(
                f"residual variant {residual.variant!r} does not match controller variant {config.residual_variant!r}"
            )
        self.shift_fraction = float(shift_fraction)
        self.parallel_prep = parallel_prep
        self._pool = ThreadPoolExecutor(max_workers=1) if parallel_prep else None
        self.iterate = None
        self.qp = None
        self._condensed = None
        self._prepared = False
        self._active = None
        self.last_command = None
        self.records = []
        self.qp_builds = 0
        self.qp_solves = 0
        self.failed_cycles = 0

    def reset(self, x0=None, ref_x=None, ref_u=None):
        self.iterate = None if x0 is None else init_iterate(self.plant, x0, ref_x, ref_u)
        self.qp = self._condensed = self._active = self.last_command = None
        self._prepared = False
        self.records = []
        self.qp_builds = self.qp_solves = self.failed_cycles = 0
        self.counter.reset()

    def _prepare_dd(self):
        t0 = time.perf_counter()
        approxes = None
        if self.config.mode == "rtn" and self.residual is not None:
            approxes = prepare_nodes(self.residual, self.iterate, self.config.taylor_order)
        return approxes, 1e3 * (time.perf_counter() - t0)

    def prepare(self, ref_x, ref_u):
        """Both preparation phases; returns ``(prep_dd_ms, prep_qp_ms)``."""
        if self.iterate is None:
            raise ConfigurationError("controller has no iterate; call reset() or rti_cycle() first")
        self._prepared = False
        if self._pool is not None:
            fut = self._pool.submit(self._prepare_dd)
            approxes, dd_ms = fut.result()
        else:
            approxes, dd_ms = self._prepare_dd()
        t0 = time.perf_counter()
        qp = build_qp(self.plant, self.iterate, self.config, ref_x, ref_u, approxes, self.residual, self.counter)
        self._condensed = condense(qp)
        self.qp = qp
        self.qp_builds += 1
        qp_ms = 1e3 * (time.perf_counter() - t0)
        self._prepared = True
        return dd_ms, qp_ms

    def feedback(self, x_measured):
        """Feedback phase; returns the command and the :class:`FeedbackResult`."""
        if not self._prepared:
            raise ConfigurationError("feedback called before both preparation phases completed")
        self._prepared = False
        self.qp_solves += 1
        fb = solve_feedback(self.qp, x_measured, condensed=self._condensed, warm_start=self._active,
                            config=self.config, fallback=self.last_command)
        self._active = fb.active
        xs = self.plant.normalize(self.qp.xs + fb.dxs)
        us = self.qp.us + fb.dus
        self.iterate = Iterate(xs, us).shifted(self.shift_fraction, self.plant.normalize)
        self.last_command = fb.u_command.copy()
        return fb.u_command, fb

    def _fallback(self):
        if self.last_command is not None:
            return self.last_command.copy()
        if self.iterate is not None:
            return self.iterate.us[0].copy()
        return self.plant.steady_input()

    def cycle(self, x_measured, ref_x, ref_u):
        """One real-time iteration; returns the command to apply."""
        x_measured = np.asarray(x_measured, dtype=float)
        if self.iterate is None:
            self.iterate = init_iterate(self.plant, x_measured, ref_x, ref_u)
        before = self.counter.as_dict()
        saved = self.iterate.copy()
        status, n_iter = "optimal", 0
        dd_ms = qp_ms = fb_ms = 0.0
        try:
            dd_ms, qp_ms = self.prepare(ref_x, ref_u)
            t0 = time.perf_counter()
            u, fb = self.feedback(x_measured)
            fb_ms = 1e3 * (time.perf_counter() - t0)
            n_iter = fb.iterations
        except (QpSolveError, PropagationError) as exc:
            log.warning("cycle %d failed: %s", len(self.records), exc)
            self.iterate = saved
            self._prepared = False
            self.failed_cycles += 1
            status = "failed"
            u = self._fallback()
        if not np.all(np.isfinite(u)):
            self.iterate = saved
            self.failed_cycles += 1
            status = "failed"
            u = self._fallback()
        self.records.append(CycleRecord(len(self.records), dd_ms, qp_ms, fb_ms, n_iter, status,
                                        self.counter.diff(before), np.array(u), x_measured.copy()))
        return np.array(u)

    @property
    def last_record(self):
        return self.records[-1] if self.records else None

    def write_telemetry(self, path):
        """Cycle telemetry CSV: index, phase times, QP iterations, counters, command, measured state."""
        if not self.records:
            raise ConfigurationError("no cycles recorded")
        counter_names = list(self.records[0].counters)
        header = (["cycle", *TIMING_COLUMNS, "qp_iterations", "status", *counter_names]
                  + [f"u{i}" for i in range(self.config.nu)] + [f"x{i}" for i in range(self.config.nx)])
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(header)
            for rec in self.records:
                w.writerow([rec.cycle, f"{rec.prep_dd_ms:.4f}", f"{rec.prep_qp_ms:.4f}", f"{rec.feedback_ms:.4f}",
                            f"{rec.total_ms:.4f}", rec.qp_iterations, rec.status,
                            *[rec.counters[c] for c in counter_names],
                            *[repr(float(v)) for v in rec.command], *[repr(float(v)) for v in rec.measured]])
        return path

    def close(self):
        if self._pool is not None:
            self._pool.shutdown()
            self._pool = None


def rti_cycle(controller, x_measured, ref_x, ref_u):
    return controller.cycle(x_measured, ref_x, ref_u)


@dataclass
class PhaseTimes:
    """Summary statistics over recorded cycles."""

    median_ms: dict = field(default_factory=dict)
    p95_ms: dict = field(default_factory=dict)

    @classmethod
    def from_records(cls, records):
        out = cls()
        for name in TIMING_COLUMNS:
            vals = np.array([getattr(r, name) for r in records])
            out.median_ms[name] = float(np.median(vals)) if len(vals) else float("nan")
            out.p95_ms[name] = float(np.percentile(vals, 95)) if len(vals) else float("nan")
        return out
