"""Per-node local expansions of the residual dynamics.

``TaylorApprox`` is the only object the QP construction consumes from the
learned model: its value, Jacobian and (optionally) Hessian at the
linearization point ``z0 = (x_k, u_k)``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .exceptions import ConfigurationError


@dataclass(frozen=True, eq=False)
class TaylorApprox:
    z0: np.ndarray
    f_bar: np.ndarray
    J: np.ndarray
    H: np.ndarray = None
    order: int = 1
    node: int = 0

    def __post_init__(self):
        if self.order not in (1, 2):
            raise ConfigurationError("Taylor order must be 1 or 2")
        z0, f_bar, J = (np.array(a, dtype=float) for a in (self.z0, self.f_bar, self.J))
        if J.shape != (f_bar.size, z0.size):
            raise ConfigurationError(f"Jacobian shape {J.shape} != ({f_bar.size}, {z0.size})")
        H = self.H
        if self.order == 2:
            if H is None:
                raise ConfigurationError("second-order expansion needs a Hessian")
            H = np.array(H, dtype=float)
            if H.shape != (f_bar.size, z0.size, z0.size):
                raise ConfigurationError(f"Hessian shape {H.shape} is inconsistent")
            scale = 1.0 + np.abs(H).max(initial=0.0)
            if np.abs(H - np.swapaxes(H, 1, 2)).max(initial=0.0) > 1e-10 * scale:
                raise ConfigurationError("per-output Hessians must be symmetric")
            H.flags.writeable = False
        elif H is not None:
            raise ConfigurationError("first-order expansion must not carry a Hessian")
        for arr in (z0, f_bar, J):
            arr.flags.writeable = False
        object.__setattr__(self, "z0", z0)
        object.__setattr__(self, "f_bar", f_bar)
        object.__setattr__(self, "J", J)
        object.__setattr__(self, "H", H)

    def verify(self, residual, nx, atol=1e-10):
        """Check ``f_bar`` against a direct evaluation of the residual provider."""
        direct = residual.value(self.z0[:nx], self.z0[nx:])
        return bool(np.allclose(direct, self.f_bar, rtol=1e-10, atol=atol))

    def to_json(self):
        return json.dumps({
            "node": self.node,
            "order": self.order,
            "z0": self.z0.tolist(),
            "f_bar": self.f_bar.tolist(),
            "J": self.J.tolist(),
            "H": None if self.H is None else self.H.tolist(),
        })

    @classmethod
    def from_json(cls, text):
        d = json.loads(text)
        return cls(d["z0"], d["f_bar"], d["J"], d["H"], d["order"], d["node"])


def eval_taylor(a, z):
    dz = np.asarray(z, dtype=float) - a.z0
    out = a.f_bar + a.J @ dz
    if a.order == 2:
        out = out + 0.5 * np.einsum("iab,a,b->i", a.H, dz, dz)
    return out


def eval_taylor_jacobian(a, z):
    if a.order == 1:
        return a.J
    dz = np.asarray(z, dtype=float) - a.z0
    return a.J + a.H @ dz


def prepare_nodes(residual, iterate, order=1):
    """Expand the residual at every shooting node with one batched call."""
    xs, us = iterate.xs[:-1], iterate.us
    F, J, H = residual.evaluate_batch(xs, us, order)
    Z0 = np.concatenate([xs, us], axis=1)
    return [
        TaylorApprox(Z0[k], F[k], J[k], None if H is None else H[k], order, k)
        for k in range(len(Z0))
    ]


class TaylorStack:
    """Stacked expansions for vectorized evaluation across the horizon."""

    def __init__(self, approxes):
        if not approxes:
            raise ConfigurationError("no Taylor approximations given")
        self.order = approxes[0].order
        if any(a.order != self.order for a in approxes):
            raise ConfigurationError("mixed expansion orders")
        self.Z0 = np.stack([a.z0 for a in approxes])
        self.F = np.stack([a.f_bar for a in approxes])
        self.J = np.stack([a.J for a in approxes])
        self.H = np.stack([a.H for a in approxes]) if self.order == 2 else None

    def __len__(self):
        return len(self.Z0)

    def value(self, Z):
        dZ = Z - self.Z0
        out = self.F + np.einsum("kij,kj->ki", self.J, dZ)
        if self.H is not None:
            out += 0.5 * np.einsum("kiab,ka,kb->ki", self.H, dZ, dZ)
        return out

    def jacobian(self, Z):
        if self.H is None:
            return self.J
        return self.J + np.einsum("kiab,kb->kia", self.H, Z - self.Z0)
