"""Residual dynamics providers evaluated in (x, u) space.

A provider exposes ``rows`` (state-derivative rows it contributes to),
single-point ``value``/``jacobian`` and a batched ``evaluate_batch``. The
controller only ever sees these; the network engine stays behind them.
"""

from __future__ import annotations

import numpy as np

from .dynamics import NX_QUAD, Q, V, rotation_matrix, rotation_matrix_grad
from .exceptions import ConfigurationError, UnsupportedOperationError
from .neural.mlp import mlp_batched_eval


class NetworkResidual:
    """Wraps an :class:`MlpModel` with the feature/embedding wiring of a plant."""

    def __init__(self, model, plant, variant=None, counter=None):
        variant = variant or model.input_variant
        if model.input_variant != variant:
            raise ConfigurationError(
                f"model was trained on variant {model.input_variant!r}, controller uses {variant!r}"
            )
        names = plant.feature_names(variant)
        if model.in_dim != len(names):
            raise ConfigurationError(f"variant {variant!r} has {len(names)} features, model expects {model.in_dim}")
        rows = plant.output_rows(variant)
        if model.out_dim != len(rows):
            raise ConfigurationError(f"variant {variant!r} has {len(rows)} outputs, model produces {model.out_dim}")
        self.model = model
        self.plant = plant
        self.variant = variant
        self.rows = rows
        self.counter = counter
        self.nz = plant.nx + plant.nu
        self._ground = variant == "ground"

    @property
    def out_dim(self):
        return len(self.rows)

    def _patch(self, X):
        return self.plant.patches(X) if self._ground else None

    def value(self, x, u):
        z = self.plant.features(x, u, self.variant, self._patch(x))
        if self.counter is not None:
            self.counter.net_value += 1
        return mlp_batched_eval(self.model, z[None])[0]

    def jacobian(self, x, u):
        z = self.plant.features(x, u, self.variant, self._patch(x))
        if self.counter is not None:
            self.counter.net_jacobian += 1
        jac = mlp_batched_eval(self.model, z[None], "jacobian")[1][0]
        return jac @ self.plant.feature_jacobian(x, u, self.variant)

    def evaluate_batch(self, X, U, order=1, patches=None):
        """One batched network call at K points; returns ``(F, J, H)``, H is None for order 1."""
        X = np.asarray(X, dtype=float)
        U = np.asarray(U, dtype=float)
        if patches is None:
            patches = self._patch(X)
        Z = self.plant.features(X, U, self.variant, patches)
        if self.counter is not None:
            self.counter.net_batched_calls += 1
            self.counter.net_batched_points += len(X)
        dfeat = self.plant.feature_jacobian(X, U, self.variant)
        if order == 1:
            F, Jn = mlp_batched_eval(self.model, Z, "jacobian")
            return F, Jn @ dfeat, None
        if order != 2:
            raise ConfigurationError("Taylor order must be 1 or 2")
        F, Jn, Hn = mlp_batched_eval(self.model, Z, "hessian")
        H = np.einsum("kda,kide,keb->kiab", dfeat, Hn, dfeat)
        H += np.einsum("kid,kdab->kiab", Jn, self.plant.feature_hessian(X, U, self.variant))
        return F, Jn @ dfeat, H


class AnalyticDragResidual:
    """Linear body-frame drag ``-R diag(d) R^T v`` as a residual on the velocity rows.

    Used for the oracle-like "perfect model" controller.
    """

    rows = (7, 8, 9)
    out_dim = 3
    variant = "a"

    def __init__(self, drag, counter=None):
        self.drag = np.asarray(drag, dtype=float).reshape(3)
        self.counter = counter
        self.nz = NX_QUAD + 4

    def _value(self, X):
        R = rotation_matrix(X[..., Q])
        vb = np.einsum("...ba,...b->...a", R, X[..., V])
        return -np.einsum("...ab,...b->...a", R, self.drag * vb)

    def _jacobian(self, X):
        q, v = X[..., Q], X[..., V]
        R = rotation_matrix(q)
        dR = rotation_matrix_grad(q)
        D = self.drag
        M = np.einsum("...ab,b,...cb->...ac", R, D, R)  # R D R^T
        jac = np.zeros(X.shape[:-1] + (3, self.nz))
        # d(R D R^T v)/dq = dR D R^T v + R D dR^T v
        vb = np.einsum("...ba,...b->...a", R, v)
        t1 = np.einsum("...abi,b,...b->...ai", dR, D, vb)
        t2 = np.einsum("...ab,b,...cbi,...c->...ai", R, D, dR, v)
        jac[..., :, Q] = -(t1 + t2)
        jac[..., :, V] = -M
        return jac

    def value(self, x, u):
        if self.counter is not None:
            self.counter.net_value += 1
        return self._value(np.asarray(x, dtype=float))

    def jacobian(self, x, u):
        if self.counter is not None:
            self.counter.net_jacobian += 1
        return self._jacobian(np.asarray(x, dtype=float))

    def evaluate_batch(self, X, U, order=1, patches=None):
        if order != 1:
            raise UnsupportedOperationError("analytic drag residual provides first-order expansions only")
        X = np.asarray(X, dtype=float)
        if self.counter is not None:
            self.counter.net_batched_calls += 1
            self.counter.net_batched_points += len(X)
        return self._value(X), self._jacobian(X), None
