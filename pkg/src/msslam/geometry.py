"""Rigid-body transforms and the three parametric object models.

Conventions
-----------
* A pose ``T = (R, t)`` maps body coordinates into the parent frame:
  ``p_parent = R @ p_body + t``.
* Twists are ordered ``(rho, phi)``: translational part first, rotation
  vector second.
* Right perturbations are used everywhere: ``T <- T @ exp(delta)``.

The kernels (``so3_*``, ``se3_*``) operate on stacked arrays so the factor
graph can evaluate thousands of residuals at once; the :class:`Pose` methods
are thin wrappers over the same code.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Union

import numpy as np

from msslam.errors import NearPiRotation

NEAR_PI_TOL = 1e-6
_SMALL = 1e-4


def wrap_angle(a):
    """Wrap angle(s) to (-pi, pi]."""
    w = -((-np.asarray(a, dtype=float) + math.pi) % (2.0 * math.pi) - math.pi)
    if np.ndim(w) == 0:
        return float(w)
    return w


# --------------------------------------------------------------------------
# SO(3) kernels
# --------------------------------------------------------------------------

def hat(v: np.ndarray) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    out = np.zeros(v.shape[:-1] + (3, 3))
    out[..., 0, 1] = -v[..., 2]
    out[..., 0, 2] = v[..., 1]
    out[..., 1, 0] = v[..., 2]
    out[..., 1, 2] = -v[..., 0]
    out[..., 2, 0] = -v[..., 1]
    out[..., 2, 1] = v[..., 0]
    return out


def vee(m: np.ndarray) -> np.ndarray:
    m = np.asarray(m, dtype=float)
    return np.stack([m[..., 2, 1], m[..., 0, 2], m[..., 1, 0]], axis=-1)


def _coeffs(theta: np.ndarray):
    """A = sin/θ, B = (1-cos)/θ², C = (θ-sin)/θ³ with series near zero."""
    th2 = theta * theta
    small = theta < _SMALL
    safe = np.where(small, 1.0, theta)
    a = np.where(small, 1.0 - th2 / 6.0, np.sin(safe) / safe)
    b = np.where(small, 0.5 - th2 / 24.0, (1.0 - np.cos(safe)) / (safe * safe))
    c = np.where(small, 1.0 / 6.0 - th2 / 120.0, (safe - np.sin(safe)) / (safe ** 3))
    return a, b, c


def so3_exp(phi: np.ndarray) -> np.ndarray:
    """Rodrigues' formula."""
    phi = np.asarray(phi, dtype=float)
    theta = np.linalg.norm(phi, axis=-1)
    a, b, _ = _coeffs(theta)
    K = hat(phi)
    eye = np.broadcast_to(np.eye(3), K.shape)
    return eye + a[..., None, None] * K + b[..., None, None] * (K @ K)


def so3_angle(R: np.ndarray) -> np.ndarray:
    R = np.asarray(R, dtype=float)
    w = 0.5 * vee(R - np.swapaxes(R, -1, -2))
    s = np.linalg.norm(w, axis=-1)
    c = 0.5 * (np.trace(R, axis1=-2, axis2=-1) - 1.0)
    return np.arctan2(s, c)


def so3_log(R: np.ndarray, strict: bool = True) -> np.ndarray:
    """Rotation vector of ``R``.

    With ``strict`` (the default) angles within ``NEAR_PI_TOL`` of pi raise
    :class:`NearPiRotation`; otherwise those entries fall back to a
    quaternion-based conversion that stays valid at pi.
    """
    R = np.asarray(R, dtype=float)
    w = 0.5 * vee(R - np.swapaxes(R, -1, -2))
    s = np.linalg.norm(w, axis=-1)
    c = 0.5 * (np.trace(R, axis1=-2, axis2=-1) - 1.0)
    theta = np.arctan2(s, c)
    near_pi = theta > math.pi - NEAR_PI_TOL
    if np.any(near_pi):
        if strict:
            raise NearPiRotation(f"rotation angle {float(np.max(theta))!r} within {NEAR_PI_TOL} of pi")
        from scipy.spatial.transform import Rotation

        if R.ndim == 2:
            return Rotation.from_matrix(R).as_rotvec()
        out = np.empty(R.shape[:-1])
        out[~near_pi] = so3_log(R[~near_pi])
        out[near_pi] = Rotation.from_matrix(R[near_pi]).as_rotvec()
        return out
    small = theta < _SMALL
    safe_s = np.where(small, 1.0, s)
    scale = np.where(small, 1.0 + theta * theta / 6.0, theta / safe_s)
    return w * scale[..., None]


def so3_left_jacobian(phi: np.ndarray) -> np.ndarray:
    phi = np.asarray(phi, dtype=float)
    theta = np.linalg.norm(phi, axis=-1)
    _, b, c = _coeffs(theta)
    K = hat(phi)
    eye = np.broadcast_to(np.eye(3), K.shape)
    return eye + b[..., None, None] * K + c[..., None, None] * (K @ K)


def so3_right_jacobian(phi: np.ndarray) -> np.ndarray:
    return so3_left_jacobian(-np.asarray(phi, dtype=float))


def so3_left_jacobian_inv(phi: np.ndarray) -> np.ndarray:
    phi = np.asarray(phi, dtype=float)
    theta = np.linalg.norm(phi, axis=-1)
    small = theta < _SMALL
    safe = np.where(small, 1.0, theta)
    d = np.where(
        small,
        1.0 / 12.0 + theta * theta / 720.0,
        1.0 / (safe * safe) - (1.0 + np.cos(safe)) / (2.0 * safe * np.sin(safe)),
    )
    K = hat(phi)
    eye = np.broadcast_to(np.eye(3), K.shape)
    return eye - 0.5 * K + d[..., None, None] * (K @ K)


def so3_right_jacobian_inv(phi: np.ndarray) -> np.ndarray:
    return so3_left_jacobian_inv(-np.asarray(phi, dtype=float))


def rot_z(yaw) -> np.ndarray:
    c, s = np.cos(yaw), np.sin(yaw)
    out = np.zeros(np.shape(yaw) + (3, 3))
    out[..., 0, 0] = c
    out[..., 0, 1] = -s
    out[..., 1, 0] = s
    out[..., 1, 1] = c
    out[..., 2, 2] = 1.0
    return out


def rot_x(roll) -> np.ndarray:
    c, s = math.cos(roll), math.sin(roll)
    return np.array([[1.0, 0.0, 0.0], [0.0, c, -s], [0.0, s, c]])


def rot_y(pitch) -> np.ndarray:
    c, s = math.cos(pitch), math.sin(pitch)
    return np.array([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])


# --------------------------------------------------------------------------
# SE(3) kernels on (R, t) pairs
# --------------------------------------------------------------------------

def se3_exp_rt(xi: np.ndarray):
    xi = np.asarray(xi, dtype=float)
    rho, phi = xi[..., :3], xi[..., 3:]
    R = so3_exp(phi)
    t = np.einsum("...ij,...j->...i", so3_left_jacobian(phi), rho)
    return R, t


def se3_log_rt(R: np.ndarray, t: np.ndarray) -> np.ndarray:
    phi = so3_log(R)
    rho = np.einsum("...ij,...j->...i", so3_left_jacobian_inv(phi), np.asarray(t, dtype=float))
    return np.concatenate([rho, phi], axis=-1)


def compose_rt(Ra, ta, Rb, tb):
    return Ra @ Rb, np.einsum("...ij,...j->...i", Ra, tb) + ta


def inverse_rt(R, t):
    Rt = np.swapaxes(R, -1, -2)
    return Rt, -np.einsum("...ij,...j->...i", Rt, t)


def adjoint_rt(R, t) -> np.ndarray:
    """Adjoint of (R, t) for (rho, phi)-ordered twists."""
    R = np.asarray(R, dtype=float)
    out = np.zeros(R.shape[:-2] + (6, 6))
    out[..., :3, :3] = R
    out[..., 3:, 3:] = R
    out[..., :3, 3:] = hat(t) @ R
    return out


def _se3_q(rho: np.ndarray, phi: np.ndarray) -> np.ndarray:
    theta = np.linalg.norm(phi, axis=-1)
    small = theta < _SMALL
    s = np.where(small, 1.0, theta)
    th2 = theta * theta
    c1 = np.where(small, 1.0 / 6.0 - th2 / 120.0, (s - np.sin(s)) / s ** 3)
    c2 = np.where(small, 1.0 / 24.0 - th2 / 720.0, (s * s + 2.0 * np.cos(s) - 2.0) / (2.0 * s ** 4))
    c3 = np.where(small, 1.0 / 120.0 - th2 / 2520.0,
                  (2.0 * s - 3.0 * np.sin(s) + s * np.cos(s)) / (2.0 * s ** 5))
    P = hat(phi)
    X = hat(rho)
    PX = P @ X
    XP = X @ P
    PXP = PX @ P
    return (
        0.5 * X
        + c1[..., None, None] * (PX + XP + PXP)
        + c2[..., None, None] * (P @ PX + XP @ P - 3.0 * PXP)
        + c3[..., None, None] * (PXP @ P + P @ PXP)
    )


def se3_left_jacobian_inv(xi: np.ndarray) -> np.ndarray:
    xi = np.asarray(xi, dtype=float)
    rho, phi = xi[..., :3], xi[..., 3:]
    Ji = so3_left_jacobian_inv(phi)
    Q = _se3_q(rho, phi)
    out = np.zeros(xi.shape[:-1] + (6, 6))
    out[..., :3, :3] = Ji
    out[..., 3:, 3:] = Ji
    out[..., :3, 3:] = -Ji @ Q @ Ji
    return out


def se3_right_jacobian_inv(xi: np.ndarray) -> np.ndarray:
    return se3_left_jacobian_inv(-np.asarray(xi, dtype=float))


# --------------------------------------------------------------------------
# Value types
# --------------------------------------------------------------------------

def _frozen(a, shape) -> np.ndarray:
    arr = np.array(a, dtype=float).reshape(shape)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class Pose:
    """Rigid transform with a 3x3 rotation matrix and a translation."""

    rotation: np.ndarray
    translation: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "rotation", _frozen(self.rotation, (3, 3)))
        object.__setattr__(self, "translation", _frozen(self.translation, (3,)))

    @classmethod
    def identity(cls) -> "Pose":
        return cls(np.eye(3), np.zeros(3))

    @classmethod
    def from_translation(cls, x: float, y: float, z: float = 0.0) -> "Pose":
        return cls(np.eye(3), [x, y, z])

    @classmethod
    def from_xyz_yaw(cls, x: float, y: float, z: float, yaw: float) -> "Pose":
        return cls(rot_z(yaw), [x, y, z])

    @classmethod
    def from_matrix(cls, m) -> "Pose":
        m = np.asarray(m, dtype=float)
        return cls(m[:3, :3], m[:3, 3])

    @classmethod
    def exp(cls, xi) -> "Pose":
        R, t = se3_exp_rt(np.asarray(xi, dtype=float).reshape(6))
        return cls(R, t)

    @property
    def matrix(self) -> np.ndarray:
        m = np.eye(4)
        m[:3, :3] = self.rotation
        m[:3, 3] = self.translation
        return m

    def compose(self, other: "Pose") -> "Pose":
        return Pose(*compose_rt(self.rotation, self.translation, other.rotation, other.translation))

    __matmul__ = compose

    def inverse(self) -> "Pose":
        return Pose(*inverse_rt(self.rotation, self.translation))

    def relative(self, other: "Pose") -> "Pose":
        """Transform taking this pose to ``other``: ``self @ rel == other``."""
        return self.inverse().compose(other)

    def log(self) -> np.ndarray:
        return se3_log_rt(self.rotation, self.translation)

    def act(self, points) -> np.ndarray:
        p = np.asarray(points, dtype=float)
        return p @ self.rotation.T + self.translation

    @property
    def yaw(self) -> float:
        return yaw_of(self)

    def xyz_yaw(self) -> tuple[float, float, float, float]:
        x, y, z = (float(v) for v in self.translation)
        return x, y, z, self.yaw

    def quaternion(self) -> tuple[float, float, float, float]:
        """(w, x, y, z), w >= 0."""
        from scipy.spatial.transform import Rotation

        x, y, z, w = Rotation.from_matrix(self.rotation).as_quat()
        if w < 0:
            x, y, z, w = -x, -y, -z, -w
        return float(w), float(x), float(y), float(z)

    def allclose(self, other: "Pose", atol: float = 1e-9) -> bool:
        return bool(np.allclose(self.matrix, other.matrix, atol=atol, rtol=0.0))

    def __repr__(self) -> str:
        x, y, z, yaw = self.xyz_yaw()
        return f"Pose(x={x:.4g}, y={y:.4g}, z={z:.4g}, yaw={math.degrees(yaw):.4g}deg)"


def compose(a: Pose, b: Pose) -> Pose:
    return a.compose(b)


def inverse(p: Pose) -> Pose:
    return p.inverse()


def relative(a: Pose, b: Pose) -> Pose:
    return a.relative(b)


def se3_log(p: Pose) -> np.ndarray:
    return p.log()


def se3_exp(xi) -> Pose:
    return Pose.exp(xi)


def yaw_of(p: Pose) -> float:
    """Heading of the rotated x-axis projected onto the horizontal plane."""
    R = p.rotation
    return wrap_angle(math.atan2(R[1, 0], R[0, 0]))


# --------------------------------------------------------------------------
# Shape models
# --------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class CuboidModel:
    r: np.ndarray
    t: np.ndarray
    d: np.ndarray

    kind = "cuboid"

    def __post_init__(self):
        object.__setattr__(self, "r", _frozen(self.r, (3,)))
        object.__setattr__(self, "t", _frozen(self.t, (3,)))
        object.__setattr__(self, "d", _frozen(self.d, (3,)))
        if not np.all(self.d > 0):
            raise ValueError(f"cuboid dimensions must be positive, got {self.d.tolist()}")

    @classmethod
    def from_pose(cls, pose: Pose, d) -> "CuboidModel":
        return cls(so3_log(pose.rotation, strict=False), pose.translation, d)

    @property
    def pose(self) -> Pose:
        return Pose(so3_exp(self.r), self.t)

    @property
    def centroid(self) -> np.ndarray:
        return self.t

    @property
    def size(self) -> np.ndarray:
        return self.d

    @property
    def params(self) -> np.ndarray:
        return np.concatenate([self.r, self.t, self.d])

    @classmethod
    def from_params(cls, p) -> "CuboidModel":
        p = np.asarray(p, dtype=float)
        return cls(p[0:3], p[3:6], p[6:9])

    def transformed(self, T: Pose) -> "CuboidModel":
        return CuboidModel.from_pose(T.compose(self.pose), self.d)


@dataclass(frozen=True, eq=False)
class CylinderModel:
    b: np.ndarray
    n: np.ndarray
    radius: float

    kind = "cylinder"

    def __post_init__(self):
        object.__setattr__(self, "b", _frozen(self.b, (3,)))
        n = np.asarray(self.n, dtype=float).reshape(3)
        norm = float(np.linalg.norm(n))
        if norm == 0.0:
            raise ValueError("cylinder axis must be non-zero")
        # leave unit vectors bit-identical so serialisation round-trips exactly
        object.__setattr__(self, "n", _frozen(n if abs(norm - 1.0) <= 1e-12 else n / norm, (3,)))
        object.__setattr__(self, "radius", float(self.radius))
        if not self.radius > 0:
            raise ValueError(f"cylinder radius must be positive, got {self.radius}")

    @property
    def centroid(self) -> np.ndarray:
        return self.b

    @property
    def size(self) -> np.ndarray:
        return np.array([self.radius])

    @property
    def params(self) -> np.ndarray:
        return np.concatenate([self.b, self.n, [self.radius]])

    @classmethod
    def from_params(cls, p) -> "CylinderModel":
        p = np.asarray(p, dtype=float)
        return cls(p[0:3], p[3:6], p[6])

    def transformed(self, T: Pose) -> "CylinderModel":
        return CylinderModel(T.act(self.b), T.rotation @ self.n, self.radius)


@dataclass(frozen=True, eq=False)
class EllipsoidModel:
    c: np.ndarray
    d_e: np.ndarray

    kind = "ellipsoid"

    def __post_init__(self):
        object.__setattr__(self, "c", _frozen(self.c, (3,)))
        object.__setattr__(self, "d_e", _frozen(self.d_e, (2,)))
        if not np.all(self.d_e > 0):
            raise ValueError(f"ellipsoid dimensions must be positive, got {self.d_e.tolist()}")

    @property
    def centroid(self) -> np.ndarray:
        return self.c

    @property
    def size(self) -> np.ndarray:
        return self.d_e

    @property
    def params(self) -> np.ndarray:
        return np.concatenate([self.c, self.d_e])

    @classmethod
    def from_params(cls, p) -> "EllipsoidModel":
        p = np.asarray(p, dtype=float)
        return cls(p[0:3], p[3:5])

    def transformed(self, T: Pose) -> "EllipsoidModel":
        return EllipsoidModel(T.act(self.c), self.d_e)


ShapeModel = Union[CuboidModel, CylinderModel, EllipsoidModel]

SHAPE_TYPES = {"cuboid": CuboidModel, "cylinder": CylinderModel, "ellipsoid": EllipsoidModel}


def shape_from_params(kind: str, params) -> ShapeModel:
    try:
        cls = SHAPE_TYPES[kind]
    except KeyError:
        raise ValueError(f"unknown shape kind {kind!r}") from None
    return cls.from_params(params)
