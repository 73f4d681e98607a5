"""Key-pose trajectories and noisy odometry."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from msslam.errors import DegenerateTrajectory
from msslam.geometry import Pose, rot_z


@dataclass(frozen=True)
class Trajectory:
    true_poses: tuple[Pose, ...]
    odometry: tuple[Pose, ...]

    def __len__(self) -> int:
        return len(self.true_poses)

    def relative_odometry(self) -> list[Pose]:
        """Per-step odometry increments; the first entry is the identity."""
        out = [Pose.identity()]
        for a, b in zip(self.odometry[:-1], self.odometry[1:]):
            out.append(a.relative(b))
        return out


def _positions(waypoints) -> np.ndarray:
    pts = []
    for w in waypoints:
        if isinstance(w, Pose):
            pts.append(np.array(w.translation))
        else:
            w = np.asarray(w, dtype=float).reshape(-1)
            pts.append(np.array([w[0], w[1], w[2] if len(w) > 2 else 0.0]))
    return np.array(pts)


def interpolate_key_poses(waypoints, key_pose_spacing: float) -> list[Pose]:
    """Poses every ``key_pose_spacing`` metres of arc length along the polyline.

    Heading follows the direction of the current segment (yaw only).
    """
    if len(waypoints) < 2:
        raise ValueError("need at least two waypoints")
    if key_pose_spacing <= 0:
        raise ValueError("key_pose_spacing must be positive")
    pts = _positions(waypoints)
    seg = np.diff(pts, axis=0)
    seg_len = np.linalg.norm(seg, axis=1)
    keep = seg_len > 1e-12
    pts = np.vstack([pts[:1], pts[1:][keep]])
    seg, seg_len = seg[keep], seg_len[keep]
    total = float(seg_len.sum())
    if total + 1e-9 < key_pose_spacing:
        raise DegenerateTrajectory(f"path length {total:.3f} m shorter than spacing {key_pose_spacing} m")
    cum = np.concatenate([[0.0], np.cumsum(seg_len)])
    n = int(math.floor(total / key_pose_spacing + 1e-9)) + 1
    poses = []
    for k in range(n):
        s = min(k * key_pose_spacing, total)
        i = int(np.searchsorted(cum, s, side="right") - 1)
        i = min(max(i, 0), len(seg) - 1)
        frac = (s - cum[i]) / seg_len[i]
        p = pts[i] + frac * seg[i]
        yaw = math.atan2(seg[i][1], seg[i][0])
        poses.append(Pose(rot_z(yaw), p))
    return poses


def generate_trajectory(waypoints, key_pose_spacing: float, odom_noise=None,
                        rng: np.random.Generator | None = None) -> Trajectory:
    """True key poses plus an odometry stream drifting from them.

    ``odom_noise`` holds per-axis standard deviations of the twist noise
    ``(x, y, z, roll, pitch, yaw)`` applied to every increment; a scalar is
    used for the translational axes only. The odometry starts at the first
    true pose and integrates the noisy increments.
    """
    true = interpolate_key_poses(waypoints, key_pose_spacing)
    sig = np.zeros(6)
    if odom_noise is not None:
        arr = np.asarray(odom_noise, dtype=float).reshape(-1)
        if arr.size == 1:
            sig[:3] = arr[0]
        elif arr.size == 6:
            sig[:] = arr
        else:
            raise ValueError("odom_noise must be a scalar or 6 sigmas")
    if np.any(sig < 0):
        raise ValueError("odometry sigmas must be >= 0")
    odom = [true[0]]
    for a, b in zip(true[:-1], true[1:]):
        rel = a.relative(b)
        if np.any(sig > 0):
            if rng is None:
                raise ValueError("rng required for noisy odometry")
            rel = rel.compose(Pose.exp(rng.normal(0.0, 1.0, 6) * sig))
        odom.append(odom[-1].compose(rel))
    return Trajectory(tuple(true), tuple(odom))
