"""Closed-form 4-DoF (x, y, z, yaw) alignment of matched point pairs."""

from __future__ import annotations

import math
from typing import NamedTuple

import numpy as np

from msslam.errors import DegeneratePairs
from msslam.geometry import Pose

DEGENERATE_SPREAD = 1e-9


class FitResult(NamedTuple):
    pose: Pose
    degenerate: bool


def _split(pairs, points_b=None):
    if points_b is not None:
        a = np.asarray(pairs, dtype=float).reshape(-1, 3)
        b = np.asarray(points_b, dtype=float).reshape(-1, 3)
    else:
        pairs = list(pairs)
        a = np.array([p[0] for p in pairs], dtype=float).reshape(-1, 3)
        b = np.array([p[1] for p in pairs], dtype=float).reshape(-1, 3)
    if len(a) != len(b):
        raise ValueError("point sets differ in length")
    return a, b


def fit_transform_4dof(pairs, points_b=None) -> FitResult:
    """Least-squares yaw and translation taking points A onto points B.

    ``pairs`` is a sequence of ``(a, b)`` 3-vectors, or an (N, 3) array of A
    points when ``points_b`` is given. The returned pose ``T`` minimises
    ``sum |T a - b|^2`` over rotations about z. When all A (or B) points
    share one horizontal location the yaw is unobservable: the result is
    then translation-only and flagged as degenerate.
    """
    a, b = _split(pairs, points_b)
    if not len(a):
        raise DegeneratePairs("no point pairs to align")
    ma, mb = a.mean(axis=0), b.mean(axis=0)
    ca, cb = a[:, :2] - ma[:2], b[:, :2] - mb[:2]
    spread = min(np.max(np.linalg.norm(ca, axis=1)), np.max(np.linalg.norm(cb, axis=1)))
    if spread <= DEGENERATE_SPREAD:
        return FitResult(Pose.from_translation(*(mb - ma)), True)
    s = float(np.sum(ca[:, 0] * cb[:, 1] - ca[:, 1] * cb[:, 0]))
    c = float(np.sum(ca[:, 0] * cb[:, 0] + ca[:, 1] * cb[:, 1]))
    yaw = math.atan2(s, c)
    pose = Pose.from_xyz_yaw(0.0, 0.0, 0.0, yaw)
    t = mb - pose.rotation @ ma
    return FitResult(Pose(pose.rotation, t), False)


def alignment_rms(pose: Pose, a, b) -> float:
    a = np.asarray(a, dtype=float).reshape(-1, 3)
    b = np.asarray(b, dtype=float).reshape(-1, 3)
    if not len(a):
        return 0.0
    return float(np.sqrt(np.mean(np.sum((pose.act(a) - b) ** 2, axis=1))))
