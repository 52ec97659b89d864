"""Explicit RK4 discretization and its first-order sensitivities.

``f(X, U)`` and ``df(X, U) -> (df/dx, df/du)`` may be evaluated on a batch
of points (leading axis), which lets a whole horizon be integrated at once.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from .exceptions import ConfigurationError, PropagationError


@dataclass
class EvalCounter:
    """Tally of dynamics and network evaluations, counted per point."""

    f_value: int = 0
    f_jacobian: int = 0
    net_value: int = 0
    net_jacobian: int = 0
    net_batched_calls: int = 0
    net_batched_points: int = 0

    def reset(self):
        for name in self.__dataclass_fields__:
            setattr(self, name, 0)

    def merge(self, other):
        for name in self.__dataclass_fields__:
            setattr(self, name, getattr(self, name) + getattr(other, name))
        return self

    def as_dict(self):
        return asdict(self)

    def diff(self, before):
        return {k: v - before[k] for k, v in self.as_dict().items()}


@dataclass
class SensitivityResult:
    phi_bar: np.ndarray
    A: np.ndarray
    B: np.ndarray


def _check_finite(arr, what):
    if not np.all(np.isfinite(arr)):
        bad = np.argwhere(~np.isfinite(np.atleast_2d(arr)))
        node = int(bad[0][0]) if arr.ndim > 1 else None
        raise PropagationError(f"non-finite {what}", node=node)


def _batch_size(x):
    return 1 if x.ndim == 1 else x.shape[0]


def rk4_step(f, x, u, dt, normalize=None, counter=None):
    """One classical RK4 step using exactly four evaluations of ``f``."""
    if not dt > 0:
        raise ConfigurationError("dt must be positive")
    x = np.asarray(x, dtype=float)
    u = np.asarray(u, dtype=float)
    k1 = f(x, u)
    k2 = f(x + 0.5 * dt * k1, u)
    k3 = f(x + 0.5 * dt * k2, u)
    k4 = f(x + dt * k3, u)
    if counter is not None:
        counter.f_value += 4 * _batch_size(x)
    for k in (k1, k2, k3, k4):
        _check_finite(k, "state derivative")
    out = x + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    return normalize(out) if normalize is not None else out


def rk4_sensitivities(f, df, x, u, dt, normalize=None, counter=None):
    """RK4 step plus exact chain-rule sensitivities ``A = dphi/dx``, ``B = dphi/du``.

    ``normalize`` is applied to ``phi_bar`` only; the sensitivities are those
    of the raw RK4 map.
    """
    if not dt > 0:
        raise ConfigurationError("dt must be positive")
    x = np.asarray(x, dtype=float)
    u = np.asarray(u, dtype=float)
    batch = x.shape[:-1]
    nx, nu = x.shape[-1], u.shape[-1]
    eye = np.broadcast_to(np.eye(nx), batch + (nx, nx))

    ks, dkx, dku = [], [], []
    xs, dxs_dx, dxs_du = x, eye, np.zeros(batch + (nx, nu))
    for c in (0.5, 0.5, 1.0, None):
        k = f(xs, u)
        fx, fu = df(xs, u)
        _check_finite(k, "state derivative")
        _check_finite(fx, "state Jacobian")
        kx = fx @ dxs_dx
        ku = fx @ dxs_du + fu
        ks.append(k)
        dkx.append(kx)
        dku.append(ku)
        if c is not None:
            xs = x + c * dt * k
            dxs_dx = eye + c * dt * kx
            dxs_du = c * dt * ku
    if counter is not None:
        counter.f_value += 4 * _batch_size(x)
        counter.f_jacobian += 4 * _batch_size(x)
    w = dt / 6.0
    phi = x + w * (ks[0] + 2.0 * ks[1] + 2.0 * ks[2] + ks[3])
    A = eye + w * (dkx[0] + 2.0 * dkx[1] + 2.0 * dkx[2] + dkx[3])
    B = w * (dku[0] + 2.0 * dku[1] + 2.0 * dku[2] + dku[3])
    if normalize is not None:
        phi = normalize(phi)
    return SensitivityResult(phi, A, B)
