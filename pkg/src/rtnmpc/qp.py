"""Condensing of the multiple-shooting QP and a primal active-set box-QP solver.

The QP in the shooting variables is::

    min  sum_k 1/2 [dx;du]^T H_k [dx;du] + q_k^T dx + r_k^T du  +  1/2 dx_N^T P dx_N + q_N^T dx_N
    s.t. dx_{k+1} = A_k dx_k + B_k du_k + c_k,   dx_0 = x0 - xs_0,   lbu_k <= du_k <= ubu_k

with defects ``c_k = phi_bar_k - xs_{k+1}``. Condensing eliminates the
states and leaves a dense problem in the stacked input steps.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .exceptions import ConfigurationError, UnsupportedOperationError

log = logging.getLogger(__name__)

STATUS_OPTIMAL = "optimal"
STATUS_MAX_ITER = "max_iter"
MAX_ITER = 200


@dataclass(eq=False)
class CondensedQp:
    """Dense box QP ``min 1/2 du^T H du + g^T du, lb <= du <= ub``.

    ``Phi``, ``Gamma`` and ``c`` map ``(dx0, du)`` back to the stacked state
    steps: ``dX = Phi dx0 + Gamma du + c``. ``g0`` and ``Gx0`` give the
    gradient as an affine function of ``dx0``; ``g`` is the current value.
    """

    H: np.ndarray
    g: np.ndarray
    lb: np.ndarray
    ub: np.ndarray
    Phi: np.ndarray
    Gamma: np.ndarray
    c: np.ndarray
    g0: np.ndarray
    Gx0: np.ndarray
    nx: int
    nu: int
    x_lin0: np.ndarray
    dx0: np.ndarray = None

    def __post_init__(self):
        if self.dx0 is None:
            self.dx0 = np.zeros(self.nx)
        if np.any(self.lb > self.ub):
            raise ConfigurationError("lower bound exceeds upper bound")

    @property
    def N(self):
        return len(self.g) // self.nu

    def with_x0(self, x0):
        """Return a copy with the initial-state parameter set to ``x0``."""
        dx0 = np.asarray(x0, dtype=float) - self.x_lin0
        if dx0.shape != (self.nx,):
            raise ConfigurationError(f"x0 has shape {dx0.shape}, expected ({self.nx},)")
        return CondensedQp(self.H, self.g0 + self.Gx0 @ dx0, self.lb, self.ub, self.Phi, self.Gamma, self.c,
                           self.g0, self.Gx0, self.nx, self.nu, self.x_lin0, dx0)

    def recover_states(self, du):
        dX = self.Phi @ self.dx0 + self.Gamma @ np.asarray(du, dtype=float) + self.c
        return dX.reshape(-1, self.nx)

    def objective(self, du):
        du = np.asarray(du, dtype=float)
        return 0.5 * du @ self.H @ du + self.g @ du


def condense(qp, x0=None):
    """Eliminate the continuity equalities; ``x0=None`` keeps ``dx0 = 0``."""
    A, B, defects = qp.A, qp.B, qp.defects
    N, nx, nu = B.shape
    if A.shape != (N, nx, nx) or defects.shape != (N, nx):
        raise ConfigurationError("inconsistent A/B/defect dimensions")
    if qp.Hxx.shape != (N + 1, nx, nx) or qp.Huu.shape != (N, nu, nu):
        raise ConfigurationError("inconsistent Hessian block dimensions")
    if qp.has_general_constraints:
        raise UnsupportedOperationError("general state/input constraint rows are not supported by the box-QP solver")
    n_x, n_u = (N + 1) * nx, N * nu

    # dX = Phi dx0 + Gamma dU + c, built forward node by node
    Phi = np.zeros((n_x, nx))
    Gamma = np.zeros((n_x, n_u))
    c = np.zeros(n_x)
    Phi[:nx] = np.eye(nx)
    for k in range(N):
        rk, rk1 = slice(k * nx, (k + 1) * nx), slice((k + 1) * nx, (k + 2) * nx)
        Phi[rk1] = A[k] @ Phi[rk]
        Gamma[rk1, :k * nu] = A[k] @ Gamma[rk, :k * nu]
        Gamma[rk1, k * nu:(k + 1) * nu] = B[k]
        c[rk1] = A[k] @ c[rk] + defects[k]

    Hx = np.zeros((n_x, n_x))
    for k in range(N + 1):
        Hx[k * nx:(k + 1) * nx, k * nx:(k + 1) * nx] = qp.Hxx[k]
    Hu = np.zeros((n_u, n_u))
    Hxu = np.zeros((n_x, n_u))
    for k in range(N):
        Hu[k * nu:(k + 1) * nu, k * nu:(k + 1) * nu] = qp.Huu[k]
        Hxu[k * nx:(k + 1) * nx, k * nu:(k + 1) * nu] = qp.Hxu[k]
    qx = qp.q.reshape(-1)
    ru = qp.r.reshape(-1)

    HxG = Hx @ Gamma
    H = Gamma.T @ HxG + Hu + Gamma.T @ Hxu + Hxu.T @ Gamma
    H = 0.5 * (H + H.T)
    g0 = Gamma.T @ (Hx @ c + qx) + ru + Hxu.T @ c
    Gx0 = (HxG + Hxu).T @ Phi
    out = CondensedQp(H, g0.copy(), qp.lbu.reshape(-1).copy(), qp.ubu.reshape(-1).copy(), Phi, Gamma, c, g0, Gx0,
                      nx, nu, qp.xs[0].copy())
    return out if x0 is None else out.with_x0(x0)


@dataclass(eq=False)
class BoxQpResult:
    x: np.ndarray
    lam_lb: np.ndarray
    lam_ub: np.ndarray
    status: str
    iterations: int
    active: np.ndarray
    objective_trace: list
    regularized: bool = False

    @property
    def ok(self):
        return self.status == STATUS_OPTIMAL

    def kkt_residuals(self, H, g, lb, ub):
        """Stationarity, complementarity and bound-violation norms."""
        stat = np.abs(H @ self.x + g - self.lam_lb + self.lam_ub).max(initial=0.0)
        with np.errstate(invalid="ignore"):
            cl = np.where(np.isfinite(lb), self.lam_lb * (self.x - lb), 0.0)
            cu = np.where(np.isfinite(ub), self.lam_ub * (ub - self.x), 0.0)
        comp = np.abs(np.concatenate([cl, cu])).max(initial=0.0)
        feas = max(np.max(lb - self.x, initial=0.0), np.max(self.x - ub, initial=0.0), 0.0)
        return stat, comp, feas


def _solve_spd(M, rhs, eps):
    try:
        L = np.linalg.cholesky(M)
        reg = False
    except np.linalg.LinAlgError:
        log.info("Cholesky failed on %dx%d block, adding %.3g*I", len(M), len(M), eps)
        L = np.linalg.cholesky(M + eps * np.eye(len(M)))
        reg = True
    y = np.linalg.solve(L, rhs)
    return np.linalg.solve(L.T, y), reg


def solve_box_qp(qp=None, warm_start=None, max_iter=MAX_ITER, *, H=None, g=None, lb=None, ub=None, tol=1e-12):
    """Primal active-set method for ``min 1/2 x^T H x + g^T x, lb <= x <= ub``.

    Pass either a :class:`CondensedQp` or the arrays ``H, g, lb, ub``.
    ``warm_start`` is an active-set vector (-1 lower, +1 upper, 0 free) from a
    previous solve. Ties are broken by the smallest index, so the pivoting
    sequence is a deterministic function of the inputs.
    """
    if qp is not None:
        H, g, lb, ub = qp.H, qp.g, qp.lb, qp.ub
    H = np.asarray(H, dtype=float)
    g = np.asarray(g, dtype=float)
    n = len(g)
    lb = np.full(n, -np.inf) if lb is None else np.asarray(lb, dtype=float)
    ub = np.full(n, np.inf) if ub is None else np.asarray(ub, dtype=float)
    if H.shape != (n, n) or lb.shape != (n,) or ub.shape != (n,):
        raise ConfigurationError("box QP dimension mismatch")
    if np.any(lb > ub):
        raise ConfigurationError("lower bound exceeds upper bound")
    eps = 1e-9 * max(np.trace(H), 1e-300) / max(n, 1)

    has_lb, has_ub = np.isfinite(lb), np.isfinite(ub)
    fixed = lb == ub
    x = np.clip(np.zeros(n), lb, ub)
    s = np.zeros(n, dtype=int)
    if warm_start is not None:
        ws = np.asarray(warm_start, dtype=int)
        s[(ws < 0) & has_lb] = -1
        s[(ws > 0) & has_ub] = 1
    s[fixed] = -1
    s[(s == 0) & has_lb & (x == lb)] = -1
    s[(s == 0) & has_ub & (x == ub)] = 1
    x[s < 0] = lb[s < 0]
    x[s > 0] = ub[s > 0]

    trace = [0.5 * x @ H @ x + g @ x]
    regularized = False
    status = STATUS_MAX_ITER
    it = 0
    for it in range(1, max_iter + 1):
        free = np.flatnonzero(s == 0)
        if free.size:
            bound_idx = np.flatnonzero(s != 0)
            rhs = -(g[free] + H[np.ix_(free, bound_idx)] @ x[bound_idx])
            x_star, reg = _solve_spd(H[np.ix_(free, free)], rhs, eps)
            regularized |= reg
            p = x_star - x[free]
            lo, hi = lb[free], ub[free]
            viol = (x_star < lo) | (x_star > hi)
        else:
            viol = np.zeros(0, dtype=bool)
        if free.size and viol.any():
            # ratio test towards the subspace minimizer; first blocking index wins ties
            with np.errstate(divide="ignore", invalid="ignore"):
                alpha = np.where(p < 0, (lo - x[free]) / p, np.where(p > 0, (hi - x[free]) / p, np.inf))
            alpha = np.clip(alpha, 0.0, None)
            j = int(np.argmin(alpha))
            a = min(1.0, alpha[j])
            x[free] += a * p
            i = free[j]
            if p[j] < 0:
                x[i], s[i] = lb[i], -1
            else:
                x[i], s[i] = ub[i], 1
        else:
            if free.size:
                x[free] = x_star
            grad = H @ x + g
            mult = np.where(s < 0, grad, np.where(s > 0, -grad, 0.0))
            mult[fixed] = 0.0
            scale = tol * (1.0 + np.abs(grad).max(initial=0.0))
            j = int(np.argmin(mult)) if n else 0
            if n == 0 or mult[j] >= -scale:
                status = STATUS_OPTIMAL
                trace.append(0.5 * x @ H @ x + g @ x)
                break
            s[j] = 0
        trace.append(0.5 * x @ H @ x + g @ x)

    grad = H @ x + g
    lam_lb = np.where(s < 0, np.maximum(grad, 0.0), 0.0)
    lam_ub = np.where(s > 0, np.maximum(-grad, 0.0), 0.0)
    # fixed variables carry whatever sign the gradient has
    lam_ub[fixed] = np.maximum(-grad[fixed], 0.0)
    if status != STATUS_OPTIMAL:
        log.warning("box QP hit the iteration limit (%d)", max_iter)
    return BoxQpResult(x, lam_lb, lam_ub, status, it, s.copy(), trace, regularized)
