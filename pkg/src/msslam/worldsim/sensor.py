"""Parametric stand-in for the neural detection front-end.

Landmarks inside the sensing frustum are reported in the body frame with
Gaussian noise on position, yaw and dimensions. Misses and spurious
detections are drawn at configurable rates.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from msslam.geometry import (
    CuboidModel,
    CylinderModel,
    EllipsoidModel,
    Pose,
    ShapeModel,
    rot_z,
)
from msslam.worldsim.world import World

MIN_DIMENSION = 0.02


@dataclass(frozen=True)
class SensorModel:
    max_range: float = 15.0
    hfov: float = 2.0 * math.pi
    vfov: float = math.pi / 2.0
    position_noise_sigma: float = 0.0
    dimension_noise_sigma: float = 0.0
    yaw_noise_sigma: float = 0.0
    false_negative_rate: float = 0.0
    false_positive_rate: float = 0.0
    min_range: float = 0.3
    mode: str = "parametric"
    points_per_object: int = 60

    def __post_init__(self):
        for name in ("false_negative_rate", "false_positive_rate"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1], got {v}")
        for name in ("position_noise_sigma", "dimension_noise_sigma", "yaw_noise_sigma"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")
        if self.mode not in ("parametric", "points"):
            raise ValueError(f"unknown detection mode {self.mode!r}")

    def in_frustum(self, p_body: np.ndarray) -> np.ndarray:
        p = np.atleast_2d(p_body)
        rng = np.linalg.norm(p, axis=1)
        az = np.arctan2(p[:, 1], p[:, 0])
        el = np.arctan2(p[:, 2], np.hypot(p[:, 0], p[:, 1]))
        return (
            (rng <= self.max_range)
            & (rng >= self.min_range)
            & (np.abs(az) <= 0.5 * self.hfov + 1e-12)
            & (np.abs(el) <= 0.5 * self.vfov + 1e-12)
        )


@dataclass(frozen=True)
class Detection:
    """One object observation expressed in the observing body frame.

    ``source_id`` is the ground-truth landmark id (-1 for false positives); it
    exists for evaluation only and is never read by the SLAM pipeline.
    """

    class_label: str
    shape: ShapeModel
    observing_key_pose: int = 0
    source_id: int = -1


def _noisy_shape(shape_world: ShapeModel, pose: Pose, sensor: SensorModel,
                 rng: np.random.Generator) -> ShapeModel:
    # fixed number of draws per landmark keeps streams aligned across configs
    dp = rng.normal(0.0, 1.0, 3) * sensor.position_noise_sigma
    dyaw = rng.normal(0.0, 1.0) * sensor.yaw_noise_sigma
    dd = rng.normal(0.0, 1.0, 3) * sensor.dimension_noise_sigma
    body = shape_world.transformed(pose.inverse())
    if isinstance(body, CuboidModel):
        p = body.pose
        noisy = Pose(rot_z(dyaw) @ p.rotation, p.translation + dp)
        return CuboidModel.from_pose(noisy, np.maximum(body.d + dd, MIN_DIMENSION))
    if isinstance(body, CylinderModel):
        return CylinderModel(body.b + dp, rot_z(dyaw) @ body.n, max(body.radius + dd[0], MIN_DIMENSION))
    return EllipsoidModel(body.c + dp, np.maximum(body.d_e + dd[:2], MIN_DIMENSION))


def _surface_points(shape: ShapeModel, n: int, rng: np.random.Generator) -> np.ndarray:
    if isinstance(shape, CuboidModel):
        u = rng.uniform(-0.5, 0.5, (n, 3))
        face = rng.integers(0, 3, n)
        u[np.arange(n), face] = np.sign(u[np.arange(n), face]) * 0.5
        return shape.pose.act(u * shape.d)
    if isinstance(shape, CylinderModel):
        ang = rng.uniform(-math.pi, math.pi, n)
        h = rng.uniform(0.0, 2.0, n)
        a = np.array([1.0, 0.0, 0.0]) if abs(shape.n[0]) < 0.9 else np.array([0.0, 1.0, 0.0])
        u = a - a.dot(shape.n) * shape.n
        u /= np.linalg.norm(u)
        v = np.cross(shape.n, u)
        return (shape.b + np.outer(h, shape.n)
                + shape.radius * (np.outer(np.cos(ang), u) + np.outer(np.sin(ang), v)))
    ang = rng.uniform(-math.pi, math.pi, n)
    z = rng.uniform(-1.0, 1.0, n)
    rr = np.sqrt(1.0 - z * z)
    r, h = shape.d_e
    return shape.c + np.column_stack([r * rr * np.cos(ang), r * rr * np.sin(ang), 0.5 * h * z])


def _refit(kind: str, pts: np.ndarray) -> ShapeModel:
    """Centroid and extent statistics; body frame assumed level."""
    centroid = pts.mean(axis=0)
    if kind == "cuboid":
        xy = pts[:, :2] - centroid[:2]
        w, vecs = np.linalg.eigh(xy.T @ xy)
        major = vecs[:, 1]
        yaw = math.atan2(major[1], major[0])
        local = xy @ vecs[:, ::-1]
        ext = local.max(axis=0) - local.min(axis=0)
        dz = pts[:, 2].max() - pts[:, 2].min()
        d = np.maximum([ext[0], ext[1], dz], MIN_DIMENSION)
        return CuboidModel([0.0, 0.0, yaw], centroid, d)
    if kind == "cylinder":
        center = centroid[:2]
        radius = float(np.mean(np.linalg.norm(pts[:, :2] - center, axis=1)))
        return CylinderModel([center[0], center[1], pts[:, 2].min()], [0.0, 0.0, 1.0],
                             max(radius, MIN_DIMENSION))
    radius = float(np.max(np.linalg.norm(pts[:, :2] - centroid[:2], axis=1)))
    height = float(pts[:, 2].max() - pts[:, 2].min())
    return EllipsoidModel(centroid, np.maximum([radius, height], MIN_DIMENSION))


def _false_positive(world: World, sensor: SensorModel, rng: np.random.Generator) -> tuple[str, ShapeModel]:
    labels = [c.label for c in world.classes] or sorted({lm.label for lm in world.landmarks})
    label = labels[int(rng.integers(0, len(labels)))]
    rngv = rng.uniform(max(sensor.min_range, 1.0), sensor.max_range)
    az = rng.uniform(-0.5 * sensor.hfov, 0.5 * sensor.hfov)
    el = rng.uniform(-0.5 * sensor.vfov, 0.5 * sensor.vfov)
    p = rngv * np.array([math.cos(el) * math.cos(az), math.cos(el) * math.sin(az), math.sin(el)])
    try:
        cspec = world.class_spec(label)
        kind, size = cspec.shape, cspec.nominal_size()
    except KeyError:
        ref = next(lm for lm in world.landmarks if lm.label == label)
        kind, size = ref.shape.kind, ref.shape.size
    if kind == "cuboid":
        return label, CuboidModel([0.0, 0.0, rng.uniform(-math.pi, math.pi)], p, size)
    if kind == "cylinder":
        return label, CylinderModel(p, [0.0, 0.0, 1.0], size[0])
    return label, EllipsoidModel(p, size)


def simulate_detections(pose: Pose, world: World, sensor: SensorModel, rng: np.random.Generator,
                        key_pose: int = 0, time: float = 0.0) -> list[Detection]:
    """Detections of ``world`` seen from true body pose ``pose``.

    Every landmark inside the frustum is reported with probability
    ``1 - false_negative_rate``; each in-frustum landmark additionally spawns a
    spurious detection with probability ``false_positive_rate``.
    """
    out: list[Detection] = []
    n_in_view = 0
    inv = pose.inverse()
    for lm in world.landmarks:
        shape = lm.at_time(time)
        c_body = inv.act(shape.centroid)
        if not sensor.in_frustum(c_body)[0]:
            continue
        n_in_view += 1
        miss = rng.random() < sensor.false_negative_rate
        if sensor.mode == "points":
            pts = _surface_points(shape, sensor.points_per_object, rng)
            pts = inv.act(pts) + rng.normal(0.0, 1.0, pts.shape) * sensor.position_noise_sigma
            body = _refit(shape.kind, pts)
        else:
            body = _noisy_shape(shape, pose, sensor, rng)
        if not miss:
            out.append(Detection(lm.label, body, key_pose, lm.id))
    n_fp = int(rng.binomial(n_in_view, sensor.false_positive_rate)) if n_in_view else 0
    for _ in range(n_fp):
        label, shape = _false_positive(world, sensor, rng)
        out.append(Detection(label, shape, key_pose, -1))
    return out
