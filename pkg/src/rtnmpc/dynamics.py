"""First-principles dynamics and residual-model wiring.

State layout of the quadrotor (13 entries, scalar-first Hamilton quaternion)::

    0:3   p_WB     position, world frame [m]
    3:7   q_WB     attitude (w, x, y, z)
    7:10  v_WB     velocity, world frame [m/s]
    10:13 omega_B  body rates [rad/s]

Inputs are the four rotor thrusts [N]. All dynamics functions accept a
leading batch dimension so a whole horizon can be evaluated at once.

Rotor geometry (X configuration, body x forward, y left, z up)::

    rotor   x      y      spin
      0    +d     -d      -1
      1    -d     -d      +1
      2    -d     +d      -1
      3    +d     +d      +1

with ``d = arm_length / sqrt(2)``. Roll torque is ``sum(y_i T_i)``, pitch
torque ``-sum(x_i T_i)`` and yaw torque ``kappa * sum(spin_i T_i)``.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .config import load_default, load_toml, section
from .exceptions import ConfigurationError, InputDomainError

GRAVITY = np.array([0.0, 0.0, -9.81])
G = 9.81
QUAT_TOL = 1e-3

P, Q, V, W = slice(0, 3), slice(3, 7), slice(7, 10), slice(10, 13)
NX_QUAD, NU_QUAD = 13, 4

# R(q)[a, b] = delta_ab + q^T S[a, b] q for the scalar-first Hamilton convention.
_S = np.zeros((3, 3, 4, 4))


def _term(a, b, i, j, c):
    if i == j:
        _S[a, b, i, i] += c
    else:
        _S[a, b, i, j] += c / 2.0
        _S[a, b, j, i] += c / 2.0


_w, _x, _y, _z = range(4)
for _a, _b, _terms in [
    (0, 0, [(_y, _y, -2), (_z, _z, -2)]),
    (0, 1, [(_x, _y, 2), (_w, _z, -2)]),
    (0, 2, [(_x, _z, 2), (_w, _y, 2)]),
    (1, 0, [(_x, _y, 2), (_w, _z, 2)]),
    (1, 1, [(_x, _x, -2), (_z, _z, -2)]),
    (1, 2, [(_y, _z, 2), (_w, _x, -2)]),
    (2, 0, [(_x, _z, 2), (_w, _y, -2)]),
    (2, 1, [(_y, _z, 2), (_w, _x, 2)]),
    (2, 2, [(_x, _x, -2), (_y, _y, -2)]),
]:
    for _i, _j, _c in _terms:
        _term(_a, _b, _i, _j, _c)
ROTATION_QUADRATIC = _S
ROTATION_QUADRATIC.flags.writeable = False


# ---------------------------------------------------------------------------
# quaternion helpers


def rotation_matrix(q):
    # same polynomial as I + q^T S q, written out for speed
    q = np.asarray(q, dtype=float)
    w, x, y, z = q[..., 0], q[..., 1], q[..., 2], q[..., 3]
    R = np.empty(q.shape[:-1] + (3, 3))
    R[..., 0, 0] = 1.0 - 2.0 * (y * y + z * z)
    R[..., 0, 1] = 2.0 * (x * y - w * z)
    R[..., 0, 2] = 2.0 * (x * z + w * y)
    R[..., 1, 0] = 2.0 * (x * y + w * z)
    R[..., 1, 1] = 1.0 - 2.0 * (x * x + z * z)
    R[..., 1, 2] = 2.0 * (y * z - w * x)
    R[..., 2, 0] = 2.0 * (x * z - w * y)
    R[..., 2, 1] = 2.0 * (y * z + w * x)
    R[..., 2, 2] = 1.0 - 2.0 * (x * x + y * y)
    return R


def rotation_matrix_grad(q):
    """dR[a, b] / dq_i, shape (..., 3, 3, 4)."""
    return 2.0 * np.einsum("abij,...j->...abi", _S, np.asarray(q, dtype=float))


def rotate(q, v):
    """q ⊙ v, rotation of a body vector into the world frame."""
    return np.einsum("...ab,...b->...a", rotation_matrix(q), v)


def rotate_inverse(q, v):
    return np.einsum("...ba,...b->...a", rotation_matrix(q), v)


def quat_multiply(q1, q2):
    q1, q2 = np.asarray(q1, dtype=float), np.asarray(q2, dtype=float)
    w1, v1 = q1[..., :1], q1[..., 1:]
    w2, v2 = q2[..., :1], q2[..., 1:]
    w = w1 * w2 - np.sum(v1 * v2, axis=-1, keepdims=True)
    v = w1 * v2 + w2 * v1 + np.cross(v1, v2)
    return np.concatenate([w, v], axis=-1)


def quat_conjugate(q):
    q = np.asarray(q, dtype=float)
    return q * np.array([1.0, -1.0, -1.0, -1.0])


def quat_from_axis_angle(axis, angle):
    axis = np.asarray(axis, dtype=float)
    axis = axis / np.linalg.norm(axis)
    return np.concatenate([[np.cos(angle / 2.0)], np.sin(angle / 2.0) * axis])


def quat_normalize(q):
    q = np.asarray(q, dtype=float)
    norm = np.linalg.norm(q, axis=-1, keepdims=True)
    if np.any(norm == 0.0) or not np.all(np.isfinite(norm)):
        raise InputDomainError("cannot normalize a zero or non-finite quaternion")
    return q / norm


def _omega_matrix(omega):
    ox, oy, oz = omega[..., 0], omega[..., 1], omega[..., 2]
    zero = np.zeros_like(ox)
    return np.stack(
        [
            np.stack([zero, -ox, -oy, -oz], axis=-1),
            np.stack([ox, zero, oz, -oy], axis=-1),
            np.stack([oy, -oz, zero, ox], axis=-1),
            np.stack([oz, oy, -ox, zero], axis=-1),
        ],
        axis=-2,
    )


def _xi_matrix(q):
    w, x, y, z = q[..., 0], q[..., 1], q[..., 2], q[..., 3]
    return np.stack(
        [
            np.stack([-x, -y, -z], axis=-1),
            np.stack([w, -z, y], axis=-1),
            np.stack([z, w, -x], axis=-1),
            np.stack([-y, x, w], axis=-1),
        ],
        axis=-2,
    )


def skew(v):
    v = np.asarray(v, dtype=float)
    zero = np.zeros_like(v[..., 0])
    return np.stack(
        [
            np.stack([zero, -v[..., 2], v[..., 1]], axis=-1),
            np.stack([v[..., 2], zero, -v[..., 0]], axis=-1),
            np.stack([-v[..., 1], v[..., 0], zero], axis=-1),
        ],
        axis=-2,
    )


def normalize_quaternion_rows(X):
    """Renormalize the attitude rows of a quadrotor state (batch allowed)."""
    X = np.array(X, dtype=float, copy=True)
    X[..., Q] = quat_normalize(X[..., Q])
    return X


# ---------------------------------------------------------------------------
# domain types


@dataclass(eq=False)
class QuadParams:
    mass: float
    inertia: np.ndarray
    arm_length: float
    kappa: float
    u_max: float
    rotor_sign: np.ndarray = field(default_factory=lambda: np.array([-1.0, 1.0, -1.0, 1.0]))

    def __post_init__(self):
        self.inertia = np.asarray(self.inertia, dtype=float).reshape(3)
        self.rotor_sign = np.asarray(self.rotor_sign, dtype=float).reshape(4)
        scalars = (self.mass, self.arm_length, self.kappa, self.u_max)
        if min(scalars) <= 0 or np.any(self.inertia <= 0):
            raise ConfigurationError("quadrotor parameters must be strictly positive")
        if not set(self.rotor_sign.tolist()) <= {-1.0, 1.0} or self.rotor_sign.sum() != 0:
            raise ConfigurationError("rotor_sign must hold two +1 and two -1 entries")
        d = self.arm_length / np.sqrt(2.0)
        self.rotor_x = d * np.array([1.0, -1.0, -1.0, 1.0])
        self.rotor_y = d * np.array([-1.0, -1.0, 1.0, 1.0])
        # rows: collective thrust, roll, pitch, yaw torque
        self.mixing_matrix = np.vstack(
            [np.ones(4), self.rotor_y, -self.rotor_x, self.kappa * self.rotor_sign]
        )
        self.inertia_inv = 1.0 / self.inertia

    @classmethod
    def from_config(cls, cfg):
        quad = section(cfg, "quad")
        try:
            return cls(
                mass=quad["mass"],
                inertia=quad["inertia"],
                arm_length=quad["arm_length"],
                kappa=quad["kappa"],
                u_max=quad["u_max"],
                rotor_sign=quad.get("rotor_sign", [-1, 1, -1, 1]),
            )
        except KeyError as exc:
            raise ConfigurationError(f"quad config is missing {exc}") from None

    @classmethod
    def from_file(cls, path=None):
        cfg = load_default("quad") if path is None else load_toml(path)
        return cls.from_config(cfg)

    def to_dict(self):
        return {
            "mass": self.mass,
            "inertia": self.inertia.tolist(),
            "arm_length": self.arm_length,
            "kappa": self.kappa,
            "u_max": self.u_max,
            "rotor_sign": self.rotor_sign.astype(int).tolist(),
        }

    @property
    def hover_thrust(self):
        return self.mass * G / 4.0


@dataclass(eq=False)
class QuadState:
    p_WB: np.ndarray
    q_WB: np.ndarray
    v_WB: np.ndarray
    omega_B: np.ndarray

    def __post_init__(self):
        self.p_WB = np.asarray(self.p_WB, dtype=float).reshape(3)
        self.q_WB = quat_normalize(np.asarray(self.q_WB, dtype=float).reshape(4))
        self.v_WB = np.asarray(self.v_WB, dtype=float).reshape(3)
        self.omega_B = np.asarray(self.omega_B, dtype=float).reshape(3)
        if not np.all(np.isfinite(self.to_vector())):
            raise InputDomainError("QuadState components must be finite")

    @classmethod
    def from_vector(cls, x):
        x = np.asarray(x, dtype=float)
        if x.shape != (NX_QUAD,):
            raise ConfigurationError(f"expected a 13-vector, got shape {x.shape}")
        return cls(x[P], x[Q], x[V], x[W])

    @classmethod
    def hover(cls, position=(0.0, 0.0, 0.0)):
        return cls(position, [1.0, 0.0, 0.0, 0.0], np.zeros(3), np.zeros(3))

    def to_vector(self):
        return np.concatenate([self.p_WB, self.q_WB, self.v_WB, self.omega_B])


@dataclass(eq=False)
class DoubleIntegratorState:
    p: float
    p_dot: float

    def to_vector(self):
        return np.array([self.p, self.p_dot], dtype=float)


def check_thrusts(u, params):
    u = np.asarray(u, dtype=float)
    if u.shape[-1] != NU_QUAD:
        raise ConfigurationError(f"expected 4 rotor thrusts, got shape {u.shape}")
    if np.any(u < 0.0) or np.any(u > params.u_max):
        raise InputDomainError(f"rotor thrusts must lie in [0, {params.u_max}]")
    return u


# ---------------------------------------------------------------------------
# quadrotor


def mix_thrust_torque(u, params):
    """Collective thrust vector and body torque produced by rotor thrusts.

    Returns ``(T_B, tau_B)``; ``T_B`` only has a z component. The map is
    linear in ``u`` (see the module docstring for the rotor layout).
    """
    u = np.asarray(u, dtype=float)
    wrench = np.einsum("ij,...j->...i", params.mixing_matrix, u)
    T_B = np.zeros(u.shape[:-1] + (3,))
    T_B[..., 2] = wrench[..., 0]
    return T_B, wrench[..., 1:]


def _quad_f(X, U, params):
    w, x, y, z = X[..., 3], X[..., 4], X[..., 5], X[..., 6]
    ox, oy, oz = X[..., 10], X[..., 11], X[..., 12]
    wrench = U @ params.mixing_matrix.T
    c = wrench[..., 0] / params.mass
    Jx, Jy, Jz = params.inertia
    out = np.empty(np.broadcast_shapes(X.shape[:-1], U.shape[:-1]) + (NX_QUAD,))
    out[..., P] = X[..., V]
    out[..., 3] = 0.5 * (-ox * x - oy * y - oz * z)
    out[..., 4] = 0.5 * (ox * w + oz * y - oy * z)
    out[..., 5] = 0.5 * (oy * w - oz * x + ox * z)
    out[..., 6] = 0.5 * (oz * w + oy * x - ox * y)
    # thrust along the body z axis, third column of R(q)
    out[..., 7] = c * 2.0 * (x * z + w * y)
    out[..., 8] = c * 2.0 * (y * z - w * x)
    out[..., 9] = c * (1.0 - 2.0 * (x * x + y * y)) - G
    # omega x (J omega)
    out[..., 10] = (wrench[..., 1] - (Jz - Jy) * oy * oz) / Jx
    out[..., 11] = (wrench[..., 2] - (Jx - Jz) * oz * ox) / Jy
    out[..., 12] = (wrench[..., 3] - (Jy - Jx) * ox * oy) / Jz
    return out


def quad_nominal_dynamics(x, u, params):
    """Rigid-body quadrotor derivative for state ``x`` (13) and thrusts ``u`` (4)."""
    x = np.asarray(x, dtype=float)
    u = np.asarray(u, dtype=float)
    if x.shape[-1] != NX_QUAD or u.shape[-1] != NU_QUAD:
        raise ConfigurationError(f"bad shapes x{x.shape} u{u.shape}")
    if np.any(np.abs(np.linalg.norm(x[..., Q], axis=-1) - 1.0) > QUAT_TOL):
        raise InputDomainError("attitude quaternion is not unit norm")
    return _quad_f(x, u, params)


def quad_nominal_jacobians(x, u, params):
    """Closed-form ``(df/dx, df/du)`` of :func:`quad_nominal_dynamics`."""
    X = np.asarray(x, dtype=float)
    U = np.asarray(u, dtype=float)
    batch = np.broadcast_shapes(X.shape[:-1], U.shape[:-1])
    q, omega = X[..., Q], X[..., W]
    thrust = U.sum(axis=-1)
    J = params.inertia
    fx = np.zeros(batch + (NX_QUAD, NX_QUAD))
    fu = np.zeros(batch + (NX_QUAD, NU_QUAD))
    fx[..., P, V] = np.eye(3)
    fx[..., Q, Q] = 0.5 * _omega_matrix(omega)
    fx[..., Q, W] = 0.5 * _xi_matrix(q)
    dR = rotation_matrix_grad(q)
    fx[..., V, Q] = (thrust / params.mass)[..., None, None] * dR[..., :, 2, :]
    R = rotation_matrix(q)
    fu[..., V, :] = R[..., :, 2, None] / params.mass
    Jw = J * omega
    fx[..., W, W] = -params.inertia_inv[:, None] * (skew(omega) * J - skew(Jw))
    fu[..., W, :] = params.inertia_inv[:, None] * params.mixing_matrix[1:]
    return fx, fu


# ---------------------------------------------------------------------------
# double integrator


def double_integrator_dynamics(x, u):
    x = np.asarray(x, dtype=float)
    u = np.asarray(u, dtype=float)
    if u.ndim == x.ndim - 1:
        u = u[..., None]
    return np.concatenate([x[..., 1:2], u[..., :1]], axis=-1)


def double_integrator_jacobians(x, u):
    x = np.asarray(x, dtype=float)
    batch = x.shape[:-1]
    fx = np.zeros(batch + (2, 2))
    fx[..., 0, 1] = 1.0
    fu = np.zeros(batch + (2, 1))
    fu[..., 1, 0] = 1.0
    return fx, fu


# ---------------------------------------------------------------------------
# height map


@dataclass(eq=False)
class HeightMap:
    """Global height grid; ``heights[i, j]`` covers the cell
    ``[ox + i*res, ox + (i+1)*res) x [oy + j*res, oy + (j+1)*res)``."""

    heights: np.ndarray
    origin: tuple = (0.0, 0.0)
    resolution: float = 0.1

    def __post_init__(self):
        self.heights = np.asarray(self.heights, dtype=float)
        if self.heights.ndim != 2 or self.heights.size == 0:
            raise ConfigurationError("height map must be a non-empty 2-D grid")
        if self.resolution <= 0:
            raise ConfigurationError("height map resolution must be positive")
        self.origin = (float(self.origin[0]), float(self.origin[1]))

    def cell_index(self, p):
        p = np.asarray(p, dtype=float)
        i = np.floor((p[..., 0] - self.origin[0]) / self.resolution).astype(int)
        j = np.floor((p[..., 1] - self.origin[1]) / self.resolution).astype(int)
        return i, j


_HMAP_MAGIC = b"RTNH"
_HMAP_HEADER = struct.Struct("<4sIdddII")


def save_heightmap(hmap, path):
    """Write ``.csv`` (commented header line) or binary (any other suffix).

    Binary layout, little endian: magic ``RTNH``, u32 version (1),
    f64 origin_x, f64 origin_y, f64 resolution, u32 N, u32 M, then N*M f64
    heights row-major.
    """
    path = Path(path)
    n, m = hmap.heights.shape
    if path.suffix == ".csv":
        header = (
            f"origin_x={hmap.origin[0]!r},origin_y={hmap.origin[1]!r},"
            f"resolution={hmap.resolution!r},n={n},m={m}"
        )
        np.savetxt(path, hmap.heights, delimiter=",", header=header, fmt="%.17g")
    else:
        with path.open("wb") as fh:
            fh.write(_HMAP_HEADER.pack(_HMAP_MAGIC, 1, *hmap.origin, hmap.resolution, n, m))
            fh.write(np.ascontiguousarray(hmap.heights, dtype="<f8").tobytes())


def load_heightmap(path):
    path = Path(path)
    if path.suffix == ".csv":
        with path.open() as fh:
            header = fh.readline().lstrip("#").strip()
        meta = dict(item.split("=") for item in header.split(","))
        heights = np.loadtxt(path, delimiter=",", ndmin=2)
        if heights.shape != (int(meta["n"]), int(meta["m"])):
            raise ConfigurationError("height map header does not match grid size")
        return HeightMap(heights, (float(meta["origin_x"]), float(meta["origin_y"])), float(meta["resolution"]))
    raw = path.read_bytes()
    magic, version, ox, oy, res, n, m = _HMAP_HEADER.unpack_from(raw)
    if magic != _HMAP_MAGIC or version != 1:
        raise ConfigurationError(f"{path} is not a version-1 height map file")
    heights = np.frombuffer(raw, dtype="<f8", offset=_HMAP_HEADER.size, count=n * m)
    return HeightMap(heights.reshape(n, m).copy(), (ox, oy), res)


def heightmap_local_patch(p_WB, hmap):
    """3x3 heights around the cell containing ``p_WB``; edges are clamped."""
    i, j = hmap.cell_index(p_WB)
    n, m = hmap.heights.shape
    offsets = np.arange(-1, 2)
    ii = np.clip(np.asarray(i)[..., None] + offsets, 0, n - 1)
    jj = np.clip(np.asarray(j)[..., None] + offsets, 0, m - 1)
    return hmap.heights[ii[..., :, None], jj[..., None, :]]


def ground_features(p_WB, hmap, patch=None):
    p_WB = np.asarray(p_WB, dtype=float)
    if patch is None:
        patch = heightmap_local_patch(p_WB, hmap)
    return (p_WB[..., 2, None, None] - patch).reshape(p_WB.shape[:-1] + (9,))


# ---------------------------------------------------------------------------
# residual model wiring

FEATURE_LAYOUT_VERSION = 1

QUAD_VARIANTS = ("a", "a_u", "full", "ground")

FEATURE_LAYOUTS = {
    "a": ["vb_x", "vb_y", "vb_z"],
    "a_u": ["vb_x", "vb_y", "vb_z", "T0", "T1", "T2", "T3"],
    "full": ["px", "py", "pz", "qw", "qx", "qy", "qz", "vx", "vy", "vz", "wx", "wy", "wz", "T0", "T1", "T2", "T3"],
}
FEATURE_LAYOUTS["ground"] = FEATURE_LAYOUTS["full"] + [f"dz_{r}{c}" for r in range(3) for c in range(3)]
DI_FEATURE_LAYOUTS = {"full": ["p", "p_dot", "u"]}

OUTPUT_ROWS = {"a": (7, 8, 9), "a_u": (7, 8, 9), "ground": (7, 8, 9), "full": (7, 8, 9, 10, 11, 12)}


def _check_variant(variant):
    if variant not in QUAD_VARIANTS:
        raise ConfigurationError(f"unknown residual variant {variant!r}; expected one of {QUAD_VARIANTS}")


def body_velocity(x):
    x = np.asarray(x, dtype=float)
    return rotate_inverse(x[..., Q], x[..., V])


def residual_input(x, u, variant, heightmap=None, patch=None):
    """Network feature vector for a quadrotor state/input pair.

    Layouts are listed in ``FEATURE_LAYOUTS``; for ``ground`` either a
    height map or a pre-computed 3x3 patch is required.
    """
    _check_variant(variant)
    x = np.asarray(x, dtype=float)
    u = np.asarray(u, dtype=float)
    if variant == "a":
        return body_velocity(x)
    if variant == "a_u":
        return np.concatenate([body_velocity(x), np.broadcast_to(u, x.shape[:-1] + (4,))], axis=-1)
    xu = np.concatenate([x, np.broadcast_to(u, x.shape[:-1] + (4,))], axis=-1)
    if variant == "full":
        return xu
    if heightmap is None and patch is None:
        raise ConfigurationError("variant 'ground' needs a height map")
    return np.concatenate([xu, ground_features(x[..., P], heightmap, patch)], axis=-1)


def _body_velocity_grad(q, v):
    # d vb_a / d q_i = 2 sum_b (S[b, a] q)_i v_b
    return 2.0 * np.einsum("baij,...j,...b->...ai", _S, q, v)


def residual_input_jacobian(x, u, variant):
    """d features / d (x, u), shape (..., d, 17). Height-map patches are
    treated as locally constant."""
    _check_variant(variant)
    x = np.asarray(x, dtype=float)
    batch = x.shape[:-1]
    nz = NX_QUAD + NU_QUAD
    d = len(FEATURE_LAYOUTS[variant])
    jac = np.zeros(batch + (d, nz))
    if variant in ("a", "a_u"):
        q, v = x[..., Q], x[..., V]
        jac[..., 0:3, Q] = _body_velocity_grad(q, v)
        jac[..., 0:3, V] = np.swapaxes(rotation_matrix(q), -1, -2)
        if variant == "a_u":
            jac[..., 3:7, NX_QUAD:] = np.eye(4)
        return jac
    jac[..., :nz, :] = np.eye(nz)
    if variant == "ground":
        jac[..., nz:, 2] = 1.0
    return jac


def residual_input_hessian(x, u, variant):
    """Second derivatives of the features, shape (..., d, 17, 17)."""
    _check_variant(variant)
    x = np.asarray(x, dtype=float)
    batch = x.shape[:-1]
    nz = NX_QUAD + NU_QUAD
    d = len(FEATURE_LAYOUTS[variant])
    hess = np.zeros(batch + (d, nz, nz))
    if variant in ("a", "a_u"):
        q, v = x[..., Q], x[..., V]
        hess[..., 0:3, Q, Q] = 2.0 * np.einsum("baij,...b->...aij", _S, v)
        cross = 2.0 * np.einsum("baij,...j->...aib", _S, q)
        hess[..., 0:3, Q, V] = cross
        hess[..., 0:3, V, Q] = np.swapaxes(cross, -1, -2)
    return hess


def residual_output_embed(net_out, variant):
    """Place a network output into the 13-row state derivative."""
    _check_variant(variant)
    net_out = np.asarray(net_out, dtype=float)
    rows = OUTPUT_ROWS[variant]
    if net_out.shape[-1] != len(rows):
        raise ConfigurationError(
            f"variant {variant!r} expects {len(rows)} network outputs, got {net_out.shape[-1]}"
        )
    out = np.zeros(net_out.shape[:-1] + (NX_QUAD,))
    out[..., list(rows)] = net_out
    return out


def combined_dynamics(f_F, residual, x, u):
    """Nominal derivative plus an embedded residual, both callables of (x, u)."""
    nominal = np.asarray(f_F(x, u), dtype=float)
    res = np.asarray(residual(x, u), dtype=float)
    if nominal.shape != res.shape:
        raise ConfigurationError(f"residual shape {res.shape} does not match nominal {nominal.shape}")
    return nominal + res


# ---------------------------------------------------------------------------
# plant models used by the controller


class QuadrotorModel:
    """Nominal quadrotor dynamics bundled with residual feature plumbing."""

    name = "quadrotor"
    nx = NX_QUAD
    nu = NU_QUAD
    variants = QUAD_VARIANTS

    def __init__(self, params=None, heightmap=None):
        self.params = params if params is not None else QuadParams.from_file()
        self.heightmap = heightmap

    def f(self, X, U):
        return _quad_f(X, U, self.params)

    def jacobians(self, X, U):
        return quad_nominal_jacobians(X, U, self.params)

    def normalize(self, X):
        return normalize_quaternion_rows(X)

    def steady_input(self, x=None):
        return np.full(NU_QUAD, self.params.hover_thrust)

    def input_bounds(self):
        return np.zeros(NU_QUAD), np.full(NU_QUAD, self.params.u_max)

    def feature_names(self, variant):
        _check_variant(variant)
        return FEATURE_LAYOUTS[variant]

    def output_rows(self, variant):
        _check_variant(variant)
        return OUTPUT_ROWS[variant]

    def patches(self, X):
        if self.heightmap is None:
            raise ConfigurationError("variant 'ground' needs a height map")
        return heightmap_local_patch(np.asarray(X)[..., P], self.heightmap)

    def features(self, X, U, variant, patch=None):
        return residual_input(X, U, variant, heightmap=self.heightmap, patch=patch)

    def feature_jacobian(self, X, U, variant):
        return residual_input_jacobian(X, U, variant)

    def feature_hessian(self, X, U, variant):
        return residual_input_hessian(X, U, variant)


class DoubleIntegratorModel:
    """Position double integrator; its only residual variant feeds (p, p_dot, u)
    to the network and adds the two outputs to both derivative rows."""

    name = "double_integrator"
    nx = 2
    nu = 1
    variants = ("full",)

    def __init__(self, u_limit=1.0e3):
        self.u_limit = float(u_limit)

    def f(self, X, U):
        return double_integrator_dynamics(X, U)

    def jacobians(self, X, U):
        return double_integrator_jacobians(X, U)

    def normalize(self, X):
        return np.asarray(X, dtype=float)

    def steady_input(self, x=None):
        return np.zeros(1)

    def input_bounds(self):
        return np.array([-self.u_limit]), np.array([self.u_limit])

    def _check(self, variant):
        if variant != "full":
            raise ConfigurationError(f"double integrator supports only variant 'full', got {variant!r}")

    def feature_names(self, variant):
        self._check(variant)
        return DI_FEATURE_LAYOUTS[variant]

    def output_rows(self, variant):
        self._check(variant)
        return (0, 1)

    def patches(self, X):
        raise ConfigurationError("double integrator has no height map")

    def features(self, X, U, variant, patch=None):
        self._check(variant)
        X = np.asarray(X, dtype=float)
        U = np.broadcast_to(np.asarray(U, dtype=float), X.shape[:-1] + (1,))
        return np.concatenate([X, U], axis=-1)

    def feature_jacobian(self, X, U, variant):
        self._check(variant)
        batch = np.asarray(X).shape[:-1]
        return np.broadcast_to(np.eye(3), batch + (3, 3)).copy()

    def feature_hessian(self, X, U, variant):
        self._check(variant)
        batch = np.asarray(X).shape[:-1]
        return np.zeros(batch + (3, 3, 3))
