"""Metric-semantic factor graph: key poses, object landmarks and their factors.

The graph owns mutable estimates guarded by a re-entrant lock. Place
recognition and export read immutable :class:`~msslam.maps.MapSnapshot`
copies so that they never observe a half-finished optimisation.
"""

from __future__ import annotations

import math
import threading
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Iterable

import numpy as np

from msslam.backend.factors import RESIDUAL_DIM, range_bearing, update_ellipsoid_dims
from msslam.geometry import (
    CuboidModel,
    CylinderModel,
    EllipsoidModel,
    Pose,
    ShapeModel,
    shape_from_params,
)
from msslam.maps import AssociationConfig, LandmarkRecord, MapSnapshot, model_difference

TIE_EPS = 1e-9


@dataclass(frozen=True)
class NoiseConfig:
    """Standard deviations of each factor type; weights are their inverses."""

    odometry_sigma: tuple[float, ...] = (0.05, 0.05, 0.05, 0.01, 0.01, 0.01)
    prior_sigma: tuple[float, ...] = (0.01, 0.01, 0.01, 0.001, 0.001, 0.001)
    cuboid_sigma: tuple[float, ...] = (0.05, 0.05, 0.1, 0.2, 0.2, 0.2, 0.2, 0.2, 0.2)
    cylinder_sigma: tuple[float, ...] = (0.2, 0.2, 0.2, 0.1, 0.1, 0.1, 0.1)
    ellipsoid_sigma: tuple[float, ...] = (0.2, 0.03, 0.03)
    scale_odometry_with_distance: bool = False

    def __post_init__(self):
        for kind in ("odometry", "prior", "cuboid", "cylinder", "ellipsoid"):
            s = getattr(self, f"{kind}_sigma")
            if len(s) != RESIDUAL_DIM[kind] or min(s) <= 0:
                raise ValueError(f"{kind}_sigma needs {RESIDUAL_DIM[kind]} positive entries")

    def weights(self, kind: str) -> np.ndarray:
        return 1.0 / np.asarray(getattr(self, f"{kind}_sigma"), dtype=float)

    def odometry_weights(self, distance: float) -> np.ndarray:
        w = self.weights("odometry")
        if self.scale_odometry_with_distance:
            w = w / math.sqrt(max(distance, 1e-3))
        return w

    @classmethod
    def from_dict(cls, d: dict) -> "NoiseConfig":
        kw = {k: tuple(float(x) for x in v) for k, v in d.items() if k.endswith("_sigma")}
        if "scale_odometry_with_distance" in d:
            kw["scale_odometry_with_distance"] = bool(d["scale_odometry_with_distance"])
        return cls(**kw)

    def to_dict(self) -> dict:
        out = {k: list(getattr(self, f"{k}_sigma")) for k in RESIDUAL_DIM}
        out = {f"{k}_sigma": v for k, v in out.items()}
        out["scale_odometry_with_distance"] = self.scale_odometry_with_distance
        return out


@dataclass(frozen=True)
class BackendConfig:
    key_pose_spacing: float = 1.0
    association: AssociationConfig = field(default_factory=AssociationConfig)
    noise: NoiseConfig = field(default_factory=NoiseConfig)
    ellipsoid_alpha: float = 0.2

    def __post_init__(self):
        if self.key_pose_spacing < 0:
            raise ValueError("key_pose_spacing must be >= 0")
        if not 0.0 <= self.ellipsoid_alpha <= 1.0:
            raise ValueError("ellipsoid_alpha must lie in [0, 1]")

    @classmethod
    def from_dict(cls, d: dict) -> "BackendConfig":
        return cls(
            key_pose_spacing=float(d.get("key_pose_spacing", 1.0)),
            association=AssociationConfig.from_dict(d.get("association", {})),
            noise=NoiseConfig.from_dict(d.get("noise", {})),
            ellipsoid_alpha=float(d.get("ellipsoid_alpha", 0.2)),
        )

    def to_dict(self) -> dict:
        a = self.association
        return {
            "key_pose_spacing": self.key_pose_spacing,
            "association": {"max_centroid_distance": a.max_centroid_distance,
                            "max_model_difference": a.max_model_difference,
                            "per_class": {k: list(v) for k, v in a.per_class.items()}},
            "noise": self.noise.to_dict(),
            "ellipsoid_alpha": self.ellipsoid_alpha,
        }


@dataclass
class KeyPose:
    id: int
    robot_id: int
    index: int
    estimate: Pose
    odometry_from_previous: Pose
    fixed: bool = False


@dataclass
class Landmark:
    landmark_id: int
    class_label: str
    shape: ShapeModel
    observation_count: int = 1
    robot_id: int = 0

    @property
    def centroid(self) -> np.ndarray:
        return self.shape.centroid

    def record(self) -> LandmarkRecord:
        return LandmarkRecord.from_shape(self.landmark_id, self.class_label, self.shape, self.observation_count)


@dataclass(frozen=True)
class Factor:
    kind: str
    variables: tuple[int, ...]
    measurement: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        if len(self.weights) != RESIDUAL_DIM[self.kind]:
            raise ValueError(f"{self.kind} factor needs {RESIDUAL_DIM[self.kind]} weights")


def pose_to_list(p: Pose) -> list:
    return [p.rotation.tolist(), p.translation.tolist()]


def pose_from_list(v) -> Pose:
    return Pose(np.array(v[0], dtype=float), np.array(v[1], dtype=float))


def measurement_of(shape: ShapeModel) -> np.ndarray:
    """Body-frame factor measurement for a detected shape."""
    if isinstance(shape, EllipsoidModel):
        return range_bearing(shape.c)
    return np.array(shape.params, dtype=float)


def _shape_size(shape: ShapeModel) -> np.ndarray:
    return np.asarray(shape.size, dtype=float)


def associate(detection, landmarks: Iterable[Landmark], cfg: AssociationConfig) -> int | None:
    """Nearest compatible landmark for a world-frame detection, by exhaustive scan.

    ``detection`` needs ``class_label`` and a world-frame ``shape``.
    """
    label = detection.class_label
    c = detection.shape.centroid
    size = _shape_size(detection.shape)
    best, best_d = None, math.inf
    for lm in landmarks:
        if lm.class_label != label or lm.shape.kind != detection.shape.kind:
            continue
        d = float(np.linalg.norm(lm.centroid - c))
        if d > cfg.distance(label):
            continue
        if model_difference(size, _shape_size(lm.shape)) > cfg.model(label):
            continue
        if d < best_d - TIE_EPS or (abs(d - best_d) <= TIE_EPS and lm.landmark_id < best):
            best, best_d = lm.landmark_id, d
    return best


class _SpatialHash:
    """Uniform grid over landmark centroids for constant-time candidate lookup."""

    def __init__(self, cell: float):
        self.cell = float(cell)
        self.cells: dict[tuple[int, int, int], list[int]] = defaultdict(list)

    def key(self, p) -> tuple[int, int, int]:
        return (math.floor(p[0] / self.cell), math.floor(p[1] / self.cell), math.floor(p[2] / self.cell))

    def insert(self, lid: int, p):
        self.cells[self.key(p)].append(lid)

    def near(self, p):
        kx, ky, kz = self.key(p)
        for dx in (-1, 0, 1):
            for dy in (-1, 0, 1):
                for dz in (-1, 0, 1):
                    yield from self.cells.get((kx + dx, ky + dy, kz + dz), ())


class FactorGraph:
    """Key poses, landmarks and factors of one (possibly merged) map."""

    def __init__(self, config: BackendConfig | None = None, robot_id: int = 0):
        self.config = config or BackendConfig()
        self.robot_id = robot_id
        self.lock = threading.RLock()
        self.key_poses: list[KeyPose] = []
        self.landmarks: dict[int, Landmark] = {}
        self.factors: list[Factor] = []
        self._by_robot: dict[int, list[int]] = defaultdict(list)
        self._by_index: dict[tuple[int, int], int] = {}
        self._odom_state: dict[int, tuple[Pose, float, Pose]] = {}
        self._next_landmark = 0
        self._hash = _SpatialHash(self.config.association.max_distance())
        self.version = 0

    # -- key poses -----------------------------------------------------------

    def insert_key_pose(self, robot_id: int, index: int, odometry_from_previous: Pose,
                        estimate: Pose | None = None, prior: Pose | None = None,
                        fixed: bool = False, prior_weights=None, odometry_weights=None) -> int:
        """Insert a key pose at an explicit index.

        Subsequent poses of a robot are chained to the previous one with an
        odometry factor and, when ``estimate`` is omitted, initialised by
        composing the previous estimate with the odometry. The first pose of a
        robot needs ``estimate`` (or ``prior``) and may be hard-fixed.
        """
        with self.lock:
            chain = self._by_robot[robot_id]
            if chain and index <= self.key_poses[chain[-1]].index:
                raise ValueError(f"key pose index {index} not increasing for robot {robot_id}")
            kid = len(self.key_poses)
            if chain:
                prev = self.key_poses[chain[-1]]
                est = estimate if estimate is not None else prev.estimate @ odometry_from_previous
            else:
                est = estimate if estimate is not None else (prior if prior is not None else Pose.identity())
            kp = KeyPose(kid, robot_id, index, est, odometry_from_previous, fixed)
            self.key_poses.append(kp)
            chain.append(kid)
            self._by_index[(robot_id, index)] = kid
            if len(chain) > 1:
                w = odometry_weights
                if w is None:
                    w = self.config.noise.odometry_weights(float(np.linalg.norm(odometry_from_previous.translation)))
                self.factors.append(Factor("odometry", (chain[-2], kid), _pose_vec(odometry_from_previous),
                                           np.asarray(w, dtype=float)))
            if prior is not None and not fixed:
                w = self.config.noise.weights("prior") if prior_weights is None else np.asarray(prior_weights, float)
                self.factors.append(Factor("prior", (kid,), _pose_vec(prior), w))
            self.version += 1
            return kid

    def add_key_pose(self, robot_id: int, odom_pose: Pose, start: Pose | None = None,
                     fixed: bool | None = None) -> int | None:
        """Feed one odometry reading; returns the new key-pose id or ``None``.

        A key pose is created for the first reading of a robot and whenever
        the travelled distance since the last key pose reaches the spacing.
        The first key pose is anchored at ``start`` (identity by default),
        hard-fixed for the first robot in the graph and softly otherwise.
        """
        with self.lock:
            state = self._odom_state.get(robot_id)
            if state is None:
                anchor = start if start is not None else Pose.identity()
                if fixed is None:
                    fixed = not self.key_poses
                kid = self.insert_key_pose(robot_id, 0, Pose.identity(), estimate=anchor,
                                           prior=anchor, fixed=fixed)
                self._odom_state[robot_id] = (odom_pose, 0.0, odom_pose)
                return kid
            last_kp_odom, travelled, last_odom = state
            travelled += float(np.linalg.norm(odom_pose.translation - last_odom.translation))
            if travelled + 1e-12 < self.config.key_pose_spacing:
                self._odom_state[robot_id] = (last_kp_odom, travelled, odom_pose)
                return None
            rel = last_kp_odom.relative(odom_pose)
            last = self.key_poses[self._by_robot[robot_id][-1]]
            kid = self.insert_key_pose(robot_id, last.index + 1, rel)
            self._odom_state[robot_id] = (odom_pose, 0.0, odom_pose)
            return kid

    def key_pose_id(self, robot_id: int, index: int) -> int:
        return self._by_index[(robot_id, index)]

    def has_key_pose(self, robot_id: int, index: int) -> bool:
        return (robot_id, index) in self._by_index

    def robot_key_poses(self, robot_id: int) -> list[KeyPose]:
        return [self.key_poses[k] for k in self._by_robot.get(robot_id, [])]

    def robots(self) -> list[int]:
        return sorted(r for r, c in self._by_robot.items() if c)

    # -- landmarks -----------------------------------------------------------

    def candidates(self, centroid) -> list[Landmark]:
        return [self.landmarks[i] for i in self._hash.near(centroid)]

    def add_detection(self, key_pose_id: int, detection, robot_id: int | None = None) -> int:
        """Associate a body-frame detection and add the matching object factor."""
        with self.lock:
            kp = self.key_poses[key_pose_id]
            world = detection.shape.transformed(kp.estimate)
            probe = _Probe(detection.class_label, world)
            lid = associate(probe, self.candidates(world.centroid), self.config.association)
            kind = detection.shape.kind
            if lid is None:
                lid = self._next_landmark
                self._next_landmark += 1
                owner = kp.robot_id if robot_id is None else robot_id
                self.landmarks[lid] = Landmark(lid, detection.class_label, world, 1, owner)
                self._hash.insert(lid, world.centroid)
            else:
                lm = self.landmarks[lid]
                lm.observation_count += 1
                if kind == "ellipsoid":
                    d = update_ellipsoid_dims(lm.shape.d_e, detection.shape.d_e, self.config.ellipsoid_alpha)
                    lm.shape = EllipsoidModel(lm.shape.c, d)
            self.factors.append(Factor(kind, (key_pose_id, lid), measurement_of(detection.shape),
                                       self.config.noise.weights(kind)))
            self.version += 1
            return lid

    def rebuild_index(self):
        with self.lock:
            self._hash = _SpatialHash(self.config.association.max_distance())
            for lid, lm in self.landmarks.items():
                self._hash.insert(lid, lm.centroid)

    # -- solver interface ----------------------------------------------------

    def optimize(self, config=None):
        from msslam.backend.solver import optimize

        return optimize(self, config)

    def set_estimates(self, poses: dict[int, Pose], landmarks: dict[int, ShapeModel]):
        with self.lock:
            for kid, p in poses.items():
                self.key_poses[kid].estimate = p
            for lid, s in landmarks.items():
                self.landmarks[lid].shape = _canonical(s)
            self.rebuild_index()
            self.version += 1

    def factor_counts(self) -> dict[str, int]:
        out = {k: 0 for k in RESIDUAL_DIM}
        for f in self.factors:
            out[f.kind] += 1
        return out

    # -- export --------------------------------------------------------------

    def snapshot(self, robot_id: int | None = None, min_observations: int = 1) -> MapSnapshot:
        with self.lock:
            recs = tuple(lm.record() for lid, lm in sorted(self.landmarks.items())
                         if lm.observation_count >= min_observations)
            return MapSnapshot(self.robot_id if robot_id is None else robot_id, recs)

    def trajectory(self, robot_id: int) -> list[Pose]:
        with self.lock:
            return [kp.estimate for kp in self.robot_key_poses(robot_id)]

    def trajectory_records(self) -> list[dict]:
        out = []
        with self.lock:
            for kp in self.key_poses:
                q = kp.estimate.quaternion()
                x, y, z = kp.estimate.translation
                out.append({"robot_id": kp.robot_id, "t": kp.index, "x": float(x), "y": float(y), "z": float(z),
                            "qw": float(q[0]), "qx": float(q[1]), "qy": float(q[2]), "qz": float(q[3])})
        return out

    def landmark_records(self) -> list[dict]:
        with self.lock:
            out = []
            for lid, lm in sorted(self.landmarks.items()):
                rec = lm.record().to_record()
                rec["robot_id"] = lm.robot_id
                out.append(rec)
            return out

    def to_dict(self) -> dict:
        with self.lock:
            return {
                "robot_id": self.robot_id,
                "config": self.config.to_dict(),
                "key_poses": [{"id": k.id, "robot_id": k.robot_id, "index": k.index,
                               "estimate": pose_to_list(k.estimate),
                               "odometry_from_previous": pose_to_list(k.odometry_from_previous),
                               "fixed": k.fixed} for k in self.key_poses],
                "landmarks": [{"id": lm.landmark_id, "class": lm.class_label, "shape_kind": lm.shape.kind,
                               "params": [float(v) for v in lm.shape.params],
                               "observation_count": lm.observation_count, "robot_id": lm.robot_id}
                              for lm in self.landmarks.values()],
                "factors": [{"kind": f.kind, "variables": list(f.variables),
                             "measurement": [float(v) for v in f.measurement],
                             "weights": [float(v) for v in f.weights]} for f in self.factors],
                "odom_state": {str(r): [pose_to_list(s[0]), s[1], pose_to_list(s[2])]
                               for r, s in self._odom_state.items()},
                "next_landmark": self._next_landmark,
            }

    @classmethod
    def from_dict(cls, d: dict) -> "FactorGraph":
        g = cls(BackendConfig.from_dict(d["config"]), int(d["robot_id"]))
        for k in d["key_poses"]:
            kp = KeyPose(int(k["id"]), int(k["robot_id"]), int(k["index"]), pose_from_list(k["estimate"]),
                         pose_from_list(k["odometry_from_previous"]), bool(k["fixed"]))
            g.key_poses.append(kp)
            g._by_robot[kp.robot_id].append(kp.id)
            g._by_index[(kp.robot_id, kp.index)] = kp.id
        for rec in d["landmarks"]:
            shape = shape_from_params(rec["shape_kind"], rec["params"])
            g.landmarks[int(rec["id"])] = Landmark(int(rec["id"]), rec["class"], shape,
                                                   int(rec["observation_count"]), int(rec["robot_id"]))
        for f in d["factors"]:
            g.factors.append(Factor(f["kind"], tuple(int(v) for v in f["variables"]),
                                    np.array(f["measurement"], dtype=float), np.array(f["weights"], dtype=float)))
        for r, s in d.get("odom_state", {}).items():
            g._odom_state[int(r)] = (pose_from_list(s[0]), float(s[1]), pose_from_list(s[2]))
        g._next_landmark = int(d["next_landmark"])
        g.rebuild_index()
        return g


@dataclass(frozen=True)
class _Probe:
    class_label: str
    shape: ShapeModel


def _pose_vec(p: Pose) -> np.ndarray:
    """Rotation matrix (row-major) followed by translation: a lossless 12-vector."""
    return np.concatenate([p.rotation.ravel(), p.translation])


def pose_from_vec(v) -> Pose:
    v = np.asarray(v, dtype=float)
    return Pose(v[:9].reshape(3, 3), v[9:12])


def _canonical(shape: ShapeModel) -> ShapeModel:
    """Keep cuboid rotation vectors inside the principal ball."""
    if isinstance(shape, CuboidModel) and np.linalg.norm(shape.r) > math.pi:
        return CuboidModel.from_pose(shape.pose, shape.d)
    if isinstance(shape, CylinderModel):
        return CylinderModel(shape.b, shape.n / np.linalg.norm(shape.n), shape.radius)
    return shape


__all__ = [
    "BackendConfig", "Factor", "FactorGraph", "KeyPose", "Landmark", "NoiseConfig",
    "associate", "measurement_of", "pose_from_vec",
]
