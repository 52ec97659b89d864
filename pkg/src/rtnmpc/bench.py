"""Runtime sweep on the double integrator with zero-output residual networks.

Each configuration runs the RTI controller in closed loop on a sinusoidal
position reference. The last layer of every network is zero, so commands
must agree with the network-free baseline while the full evaluation cost
is paid.
"""

from __future__ import annotations

import csv
import logging
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .config import load_default
from .dynamics import DoubleIntegratorModel
from .exceptions import ConfigurationError
from .neural.mlp import MlpModel, init_mlp
from .ocp import TIMING_COLUMNS, OcpConfig, RtiController
from .residual import NetworkResidual

log = logging.getLogger(__name__)

EQUIVALENCE_TOL = 1e-8
TIMING_FIELDS = tuple(f"{stat}_{name}" for stat in ("median", "p95") for name in TIMING_COLUMNS) + ("freq_hz",)
CSV_FIELDS = ("depth", "width", "params", "mode", *TIMING_FIELDS, "net_value", "net_jacobian", "net_batched_calls",
              "net_batched_points", "cycles", "max_command_diff", "equivalence_pass", "timed_out")


@dataclass
class BenchSpec:
    depths: list = field(default_factory=lambda: [2])
    widths: list = field(default_factory=lambda: [2, 4, 8, 16, 32, 64, 128, 256, 512])
    modes: list = field(default_factory=lambda: ["rtn", "naive"])
    repetitions: int = 100
    warmup: int = 10
    N: int = 10
    dt: float = 0.02
    timeout_s: float = 2.0
    seed: int = 0
    include_baseline: bool = True
    amplitude: float = 1.0
    period: float = 2.0
    # run configurations concurrently; timings are then meaningless, use for equivalence checks only
    parallel: bool = False

    def __post_init__(self):
        if self.repetitions < 10:
            raise ConfigurationError("repetitions must be at least 10")
        if any(int(w) < 1 for w in self.widths) or any(int(d) < 1 for d in self.depths):
            raise ConfigurationError("widths and depths must be positive")
        bad = set(self.modes) - {"rtn", "naive"}
        if bad:
            raise ConfigurationError(f"unknown modes {sorted(bad)}")

    @classmethod
    def from_config(cls, cfg, **overrides):
        table = dict(cfg.get("bench", cfg))
        table.update({k: v for k, v in overrides.items() if v is not None})
        return cls(**{k: table[k] for k in cls.__dataclass_fields__ if k in table})

    @property
    def cycles(self):
        return self.warmup + self.repetitions


def make_zero_network(depth, width, in_dim=3, out_dim=2, rng=None, activation="tanh", input_variant="full"):
    """``depth`` random hidden layers of ``width`` units followed by an all-zero output layer."""
    if min(depth, width, in_dim, out_dim) < 1:
        raise ConfigurationError("network dimensions must be positive")
    rng = rng if rng is not None else np.random.default_rng(0)
    net = init_mlp([in_dim] + [width] * depth + [out_dim], activation, input_variant, rng)
    weights = list(net.weights)
    biases = list(net.biases)
    weights[-1] = np.zeros_like(weights[-1])
    biases[-1] = np.zeros_like(biases[-1])
    return MlpModel(tuple(weights), tuple(biases), activation, input_variant)


def sine_reference(spec, t):
    """Position/velocity reference window starting at time ``t``."""
    w = 2.0 * math.pi / spec.period
    ts = t + spec.dt * np.arange(spec.N + 1)
    ref_x = np.column_stack([spec.amplitude * np.sin(w * ts), spec.amplitude * w * np.cos(w * ts)])
    ref_u = (-spec.amplitude * w * w * np.sin(w * ts[:-1]))[:, None]
    return ref_x, ref_u


def _ocp_config(spec, mode):
    base = load_default("ocp_double_integrator")
    return OcpConfig.from_config(base, DoubleIntegratorModel(), N=spec.N, dt=spec.dt, mode=mode)


def run_episode(spec, mode="rtn", model=None, cycles=None):
    """Closed loop with exact double-integrator propagation; returns ``(commands, controller, timed_out)``."""
    plant = DoubleIntegratorModel()
    cfg = _ocp_config(spec, mode)
    residual = NetworkResidual(model, plant, "full") if model is not None else None
    ctrl = RtiController(plant, cfg, residual)
    cycles = spec.cycles if cycles is None else cycles
    x = np.array([0.0, 0.0])
    h = spec.dt
    commands = []
    timed_out = False
    for n in range(cycles):
        ref_x, ref_u = sine_reference(spec, n * h)
        u = ctrl.cycle(x, ref_x, ref_u)
        commands.append(float(u[0]))
        if ctrl.last_record.total_ms > 1e3 * spec.timeout_s:
            timed_out = True
            log.warning("cycle %d exceeded %.1f s, stopping this configuration", n, spec.timeout_s)
            break
        x = np.array([x[0] + h * x[1] + 0.5 * h * h * u[0], x[1] + h * u[0]])
    return np.array(commands), ctrl, timed_out


def _summarize(depth, width, params, mode, commands, ctrl, timed_out, baseline, warmup):
    rec = ctrl.records[warmup:] or ctrl.records
    row = {"depth": depth, "width": width, "params": params, "mode": mode}
    for name in TIMING_COLUMNS:
        vals = np.array([getattr(r, name) for r in rec])
        row[f"median_{name}"] = float(np.median(vals))
        row[f"p95_{name}"] = float(np.percentile(vals, 95))
    row["freq_hz"] = 1000.0 / row["median_total_ms"] if row["median_total_ms"] > 0 else float("inf")
    last = ctrl.records[-1].counters
    for key in ("net_value", "net_jacobian", "net_batched_calls", "net_batched_points"):
        row[key] = int(last[key])
    row["cycles"] = len(commands)
    n = min(len(commands), len(baseline))
    diff = float(np.abs(commands[:n] - baseline[:n]).max()) if n else float("nan")
    row["max_command_diff"] = diff
    row["equivalence_pass"] = bool(n == len(baseline) and diff < EQUIVALENCE_TOL)
    row["timed_out"] = timed_out
    return row


def run_sweep(spec, path=None):
    """Run every (depth, width, mode) configuration; returns the rows and optionally writes CSV."""
    baseline, base_ctrl, _ = run_episode(spec)
    rows = []
    if spec.include_baseline:
        for mode in spec.modes:
            cmds, ctrl, to = (baseline, base_ctrl, False) if mode == "rtn" else run_episode(spec, mode)
            rows.append(_summarize(0, 0, 0, mode, cmds, ctrl, to, baseline, spec.warmup))
    configs = [(int(d), int(w), mode) for d in spec.depths for w in spec.widths for mode in spec.modes]
    models = {(d, w): make_zero_network(d, w, rng=np.random.default_rng(spec.seed)) for d, w, _ in configs}

    def one(config):
        depth, width, mode = config
        t0 = time.perf_counter()
        model = models[depth, width]
        cmds, ctrl, to = run_episode(spec, mode, model)
        row = _summarize(depth, width, model.n_params, mode, cmds, ctrl, to, baseline, spec.warmup)
        log.info("depth %d width %d %s: %.3f ms/cycle (%.1f s)", depth, width, mode, row["median_total_ms"],
                 time.perf_counter() - t0)
        return row

    if spec.parallel:
        log.warning("parallel sweep: timing columns are not meaningful")
        with ThreadPoolExecutor() as pool:
            rows += list(pool.map(one, configs))
    else:
        rows += [one(c) for c in configs]
    if path is not None:
        write_rows(rows, path)
    return rows


def _fmt(value):
    if isinstance(value, bool):
        return str(value).lower()
    if isinstance(value, float):
        return repr(value)
    return str(value)


def write_rows(rows, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(CSV_FIELDS)
        for row in rows:
            w.writerow([_fmt(row[k]) if k not in TIMING_FIELDS else f"{row[k]:.4f}" for k in CSV_FIELDS])
    return path
