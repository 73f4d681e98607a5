"""Residuals and Jacobians of the object and odometry factors.

All ``*_batch`` kernels take stacked arrays (leading dimension ``N``) and
return the residuals together with analytic Jacobians with respect to the
local parameterisation of each variable:

* key pose: right perturbation ``T @ exp(delta)``, ``delta = (rho, phi)``
* cuboid landmark ``[r; t; d]``: additive on all 9 entries
* cylinder landmark ``[b; n; r]``: additive on ``b`` and ``r``, ``n`` moves in
  its tangent plane, 6 local dimensions
* ellipsoid landmark: additive on the centroid, 3 local dimensions

The scalar functions ``cuboid_error`` and friends wrap the kernels for a
single factor.
"""

from __future__ import annotations

import numpy as np

from msslam.errors import ZeroRange
from msslam.geometry import (
    CuboidModel,
    CylinderModel,
    EllipsoidModel,
    Pose,
    adjoint_rt,
    compose_rt,
    hat,
    inverse_rt,
    se3_exp_rt,
    se3_log_rt,
    se3_right_jacobian_inv,
    so3_exp,
    so3_right_jacobian,
    wrap_angle,
)

RESIDUAL_DIM = {"prior": 6, "odometry": 6, "cuboid": 9, "cylinder": 7, "ellipsoid": 3}
LANDMARK_LOCAL_DIM = {"cuboid": 9, "cylinder": 6, "ellipsoid": 3}
MIN_SIZE = 1e-3


def _mv(M, v):
    return np.einsum("...ij,...j->...i", M, v)


# --------------------------------------------------------------------------
# Retractions
# --------------------------------------------------------------------------

def retract_pose(R, t, delta):
    dR, dt = se3_exp_rt(delta)
    return compose_rt(R, t, dR, dt)


def tangent_basis(n: np.ndarray) -> np.ndarray:
    """Orthonormal (..., 3, 2) basis of the plane orthogonal to unit ``n``."""
    n = np.asarray(n, dtype=float)
    a = np.zeros_like(n)
    use_x = np.abs(n[..., 0]) < 0.9
    a[..., 0] = np.where(use_x, 1.0, 0.0)
    a[..., 1] = np.where(use_x, 0.0, 1.0)
    u = a - np.sum(a * n, axis=-1, keepdims=True) * n
    u /= np.linalg.norm(u, axis=-1, keepdims=True)
    v = np.cross(n, u)
    return np.stack([u, v], axis=-1)


def retract_landmark(kind: str, params: np.ndarray, delta: np.ndarray) -> np.ndarray:
    p = np.array(params, dtype=float)
    delta = np.asarray(delta, dtype=float)
    if kind == "cuboid":
        p = p + delta
        p[..., 6:9] = np.maximum(p[..., 6:9], MIN_SIZE)
        return p
    if kind == "cylinder":
        B = tangent_basis(p[..., 3:6])
        n = p[..., 3:6] + _mv(B, delta[..., 3:5])
        p[..., 3:6] = n / np.linalg.norm(n, axis=-1, keepdims=True)
        p[..., 0:3] += delta[..., 0:3]
        p[..., 6] = np.maximum(p[..., 6] + delta[..., 5], MIN_SIZE)
        return p
    if kind == "ellipsoid":
        p[..., 0:3] += delta[..., 0:3]
        return p
    raise ValueError(f"unknown landmark kind {kind!r}")


# --------------------------------------------------------------------------
# Kernels
# --------------------------------------------------------------------------

def prior_batch(R, t, Rm, tm):
    Ri, ti = inverse_rt(Rm, tm)
    Re, te = compose_rt(Ri, ti, R, t)
    e = se3_log_rt(Re, te)
    return e, se3_right_jacobian_inv(e)


def odometry_batch(Rp, tp, Rc, tc, Rm, tm):
    """e = log(meas^-1 prev^-1 curr)."""
    Rpi, tpi = inverse_rt(Rp, tp)
    Rrel, trel = compose_rt(Rpi, tpi, Rc, tc)
    Rmi, tmi = inverse_rt(Rm, tm)
    Re, te = compose_rt(Rmi, tmi, Rrel, trel)
    e = se3_log_rt(Re, te)
    Jri = se3_right_jacobian_inv(e)
    Rci, tci = inverse_rt(Rc, tc)
    Ad = adjoint_rt(*compose_rt(Rci, tci, Rp, tp))
    return e, -Jri @ Ad, Jri


def cuboid_batch(Rx, tx, lm, meas):
    """e = [log(Z^-1 X^-1 L); d - d(z)] for landmark params ``[r; t; d]``."""
    RL = so3_exp(lm[..., 0:3])
    tL = lm[..., 3:6]
    RZ = so3_exp(meas[..., 0:3])
    tZ = meas[..., 3:6]
    Rxi, txi = inverse_rt(Rx, tx)
    Rs, ts = compose_rt(Rxi, txi, RL, tL)  # landmark in body frame
    Rzi, tzi = inverse_rt(RZ, tZ)
    Re, te = compose_rt(Rzi, tzi, Rs, ts)
    e6 = se3_log_rt(Re, te)
    e = np.concatenate([e6, lm[..., 6:9] - meas[..., 6:9]], axis=-1)
    Jri = se3_right_jacobian_inv(e6)
    RLi, tLi = inverse_rt(RL, tL)
    Ad = adjoint_rt(*compose_rt(RLi, tLi, Rx, tx))
    n = e.shape[0]
    Jx = np.zeros((n, 9, 6))
    Jx[:, :6, :] = -Jri @ Ad
    Jl = np.zeros((n, 9, 9))
    Jl[:, :6, 0:3] = Jri[:, :, 3:6] @ so3_right_jacobian(lm[..., 0:3])
    Jl[:, :6, 3:6] = Jri[:, :, 0:3] @ np.swapaxes(RL, -1, -2)
    Jl[:, 6:9, 6:9] = np.eye(3)
    return e, Jx, Jl


def cylinder_batch(Rx, tx, lm, meas):
    """e = [R^T (b - t) - b(z); R^T n - n(z); r - r(z)]."""
    b, nvec, r = lm[..., 0:3], lm[..., 3:6], lm[..., 6]
    RxT = np.swapaxes(Rx, -1, -2)
    pb = _mv(RxT, b - tx)
    pn = _mv(RxT, nvec)
    e = np.concatenate([pb - meas[..., 0:3], pn - meas[..., 3:6], (r - meas[..., 6])[..., None]], axis=-1)
    n = e.shape[0]
    Jx = np.zeros((n, 7, 6))
    Jx[:, 0:3, 0:3] = -np.eye(3)
    Jx[:, 0:3, 3:6] = hat(pb)
    Jx[:, 3:6, 3:6] = hat(pn)
    Jl = np.zeros((n, 7, 6))
    Jl[:, 0:3, 0:3] = RxT
    Jl[:, 3:6, 3:5] = RxT @ tangent_basis(nvec)
    Jl[:, 6, 5] = 1.0
    return e, Jx, Jl


def range_bearing(c_body: np.ndarray) -> np.ndarray:
    c = np.asarray(c_body, dtype=float)
    rg = np.linalg.norm(c, axis=-1)
    if np.any(rg <= 1e-6):
        raise ZeroRange("landmark centroid coincides with the sensor origin")
    return np.stack([rg, np.arctan2(c[..., 1], c[..., 0]),
                     np.arctan2(c[..., 2], np.hypot(c[..., 0], c[..., 1]))], axis=-1)


def ellipsoid_batch(Rx, tx, lm, meas):
    """Expected minus measured (range, azimuth, elevation); angles wrapped."""
    RxT = np.swapaxes(Rx, -1, -2)
    cb = _mv(RxT, lm[..., 0:3] - tx)
    exp = range_bearing(cb)
    e = exp - meas
    e[..., 1:] = wrap_angle(e[..., 1:])
    x, y, z = cb[..., 0], cb[..., 1], cb[..., 2]
    rg = exp[..., 0]
    rh2 = x * x + y * y
    rh = np.sqrt(rh2)
    safe_rh = np.maximum(rh, 1e-12)
    dmeas = np.zeros(cb.shape[:-1] + (3, 3))
    dmeas[..., 0, :] = cb / rg[..., None]
    dmeas[..., 1, 0] = -y / np.maximum(rh2, 1e-24)
    dmeas[..., 1, 1] = x / np.maximum(rh2, 1e-24)
    dmeas[..., 2, 0] = -x * z / (rg * rg * safe_rh)
    dmeas[..., 2, 1] = -y * z / (rg * rg * safe_rh)
    dmeas[..., 2, 2] = rh / (rg * rg)
    dcb_dx = np.zeros(cb.shape[:-1] + (3, 6))
    dcb_dx[..., 0:3] = -np.eye(3)
    dcb_dx[..., 3:6] = hat(cb)
    return e, dmeas @ dcb_dx, dmeas @ RxT


LANDMARK_KERNELS = {"cuboid": cuboid_batch, "cylinder": cylinder_batch, "ellipsoid": ellipsoid_batch}


# --------------------------------------------------------------------------
# Numeric Jacobians (central differences on the same retractions)
# --------------------------------------------------------------------------

def numeric_landmark_jacobians(kind: str, Rx, tx, lm, meas, h: float = 1e-6):
    kernel = LANDMARK_KERNELS[kind]
    e0 = kernel(Rx, tx, lm, meas)[0]
    n, m = e0.shape
    Jx = np.zeros((n, m, 6))
    for k in range(6):
        d = np.zeros((n, 6))
        d[:, k] = h
        ep = kernel(*retract_pose(Rx, tx, d), lm, meas)[0]
        em = kernel(*retract_pose(Rx, tx, -d), lm, meas)[0]
        Jx[:, :, k] = _diff(ep, em, kind) / (2 * h)
    ld = LANDMARK_LOCAL_DIM[kind]
    Jl = np.zeros((n, m, ld))
    for k in range(ld):
        d = np.zeros((n, ld))
        d[:, k] = h
        ep = kernel(Rx, tx, retract_landmark(kind, lm, d), meas)[0]
        em = kernel(Rx, tx, retract_landmark(kind, lm, -d), meas)[0]
        Jl[:, :, k] = _diff(ep, em, kind) / (2 * h)
    return e0, Jx, Jl


def numeric_odometry_jacobians(Rp, tp, Rc, tc, Rm, tm, h: float = 1e-6):
    e0 = odometry_batch(Rp, tp, Rc, tc, Rm, tm)[0]
    n = e0.shape[0]
    Jp = np.zeros((n, 6, 6))
    Jc = np.zeros((n, 6, 6))
    for k in range(6):
        d = np.zeros((n, 6))
        d[:, k] = h
        Jp[:, :, k] = (odometry_batch(*retract_pose(Rp, tp, d), Rc, tc, Rm, tm)[0]
                       - odometry_batch(*retract_pose(Rp, tp, -d), Rc, tc, Rm, tm)[0]) / (2 * h)
        Jc[:, :, k] = (odometry_batch(Rp, tp, *retract_pose(Rc, tc, d), Rm, tm)[0]
                       - odometry_batch(Rp, tp, *retract_pose(Rc, tc, -d), Rm, tm)[0]) / (2 * h)
    return e0, Jp, Jc


def numeric_prior_jacobian(R, t, Rm, tm, h: float = 1e-6):
    e0 = prior_batch(R, t, Rm, tm)[0]
    n = e0.shape[0]
    J = np.zeros((n, 6, 6))
    for k in range(6):
        d = np.zeros((n, 6))
        d[:, k] = h
        J[:, :, k] = (prior_batch(*retract_pose(R, t, d), Rm, tm)[0]
                      - prior_batch(*retract_pose(R, t, -d), Rm, tm)[0]) / (2 * h)
    return e0, J


def _diff(ep, em, kind):
    out = ep - em
    if kind == "ellipsoid":
        out[..., 1:] = wrap_angle(out[..., 1:])
    return out


# --------------------------------------------------------------------------
# Single-factor API
# --------------------------------------------------------------------------

def _pose_arrays(p: Pose):
    return p.rotation[None], p.translation[None]


def cuboid_error(robot_pose: Pose, landmark: CuboidModel, meas: CuboidModel) -> np.ndarray:
    """9-vector: SE(3) log of the pose discrepancy in the body frame, then size difference."""
    R, t = _pose_arrays(robot_pose)
    return cuboid_batch(R, t, landmark.params[None], meas.params[None])[0][0]


def cylinder_error(robot_pose: Pose, landmark: CylinderModel, meas: CylinderModel) -> np.ndarray:
    R, t = _pose_arrays(robot_pose)
    return cylinder_batch(R, t, landmark.params[None], meas.params[None])[0][0]


def ellipsoid_error(robot_pose: Pose, landmark: EllipsoidModel, meas) -> np.ndarray:
    """``meas`` is ``(range, azimuth, elevation)`` in the body frame."""
    R, t = _pose_arrays(robot_pose)
    return ellipsoid_batch(R, t, landmark.params[None], np.asarray(meas, dtype=float)[None])[0][0]


def odometry_error(prev: Pose, curr: Pose, meas: Pose) -> np.ndarray:
    Rp, tp = _pose_arrays(prev)
    Rc, tc = _pose_arrays(curr)
    Rm, tm = _pose_arrays(meas)
    return odometry_batch(Rp, tp, Rc, tc, Rm, tm)[0][0]


def prior_error(pose: Pose, meas: Pose) -> np.ndarray:
    return prior_batch(*_pose_arrays(pose), *_pose_arrays(meas))[0][0]


def update_ellipsoid_dims(current, meas, alpha: float) -> np.ndarray:
    """Exponential moving average of ellipsoid (radius, height)."""
    if not 0.0 <= alpha <= 1.0:
        raise ValueError("alpha must lie in [0, 1]")
    return (1.0 - alpha) * np.asarray(current, dtype=float) + alpha * np.asarray(meas, dtype=float)
