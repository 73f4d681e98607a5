"""Synthetic ground-truth worlds."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from msslam.errors import PlacementFailure
from msslam.geometry import CuboidModel, CylinderModel, EllipsoidModel, ShapeModel, shape_from_params
from msslam.rng import make_rng

MAX_ATTEMPTS_PER_LANDMARK = 1000

DEFAULT_SIZES = {
    # cuboid: length, width, height; cylinder: radius; ellipsoid: radius, height
    "cuboid": ([4.0, 1.7, 1.4], [5.0, 2.0, 1.8]),
    "cylinder": ([0.12], [0.4]),
    "ellipsoid": ([0.25, 0.7], [0.45, 1.2]),
}


@dataclass(frozen=True)
class ClassSpec:
    label: str
    shape: str
    count: int = 0
    size_min: tuple[float, ...] | None = None
    size_max: tuple[float, ...] | None = None
    moving: int = 0
    speed: float = 1.0

    def size_bounds(self) -> tuple[np.ndarray, np.ndarray]:
        lo, hi = DEFAULT_SIZES[self.shape]
        lo = np.asarray(self.size_min if self.size_min is not None else lo, dtype=float)
        hi = np.asarray(self.size_max if self.size_max is not None else hi, dtype=float)
        return lo, hi

    def nominal_size(self) -> np.ndarray:
        lo, hi = self.size_bounds()
        return 0.5 * (lo + hi)


@dataclass(frozen=True)
class WorldSpec:
    bounds: tuple[float, float, float, float]
    classes: tuple[ClassSpec, ...] = ()
    min_spacing: float = 0.0

    @classmethod
    def from_dict(cls, d: dict) -> "WorldSpec":
        classes = tuple(
            ClassSpec(
                label=c["label"],
                shape=c["shape"],
                count=int(c.get("count", 0)),
                size_min=tuple(c["size_min"]) if "size_min" in c else None,
                size_max=tuple(c["size_max"]) if "size_max" in c else None,
                moving=int(c.get("moving", 0)),
                speed=float(c.get("speed", 1.0)),
            )
            for c in d.get("classes", [])
        )
        return cls(bounds=tuple(float(b) for b in d["bounds"]), classes=classes,
                   min_spacing=float(d.get("min_spacing", 0.0)))

    def shape_of(self, label: str) -> str:
        for c in self.classes:
            if c.label == label:
                return c.shape
        raise KeyError(label)


@dataclass(frozen=True)
class LandmarkTruth:
    id: int
    label: str
    shape: ShapeModel
    velocity: tuple[float, float, float] = (0.0, 0.0, 0.0)

    @property
    def moving(self) -> bool:
        return any(v != 0.0 for v in self.velocity)

    def at_time(self, t: float) -> ShapeModel:
        if not self.moving:
            return self.shape
        from msslam.geometry import Pose

        return self.shape.transformed(Pose.from_translation(*(np.asarray(self.velocity) * t)))

    def to_record(self) -> dict:
        rec = {"id": self.id, "class": self.label, "shape_kind": self.shape.kind,
               "params": [float(v) for v in self.shape.params]}
        if self.moving:
            rec["velocity"] = [float(v) for v in self.velocity]
        return rec

    @classmethod
    def from_record(cls, rec: dict) -> "LandmarkTruth":
        return cls(int(rec["id"]), rec["class"], shape_from_params(rec["shape_kind"], rec["params"]),
                   tuple(rec.get("velocity", (0.0, 0.0, 0.0))))


@dataclass(frozen=True)
class World:
    landmarks: tuple[LandmarkTruth, ...]
    bounds: tuple[float, float, float, float]
    seed: int
    classes: tuple[ClassSpec, ...] = field(default=())

    def __len__(self) -> int:
        return len(self.landmarks)

    def centroids(self) -> np.ndarray:
        if not self.landmarks:
            return np.zeros((0, 3))
        return np.array([lm.shape.centroid for lm in self.landmarks])

    def class_spec(self, label: str) -> ClassSpec:
        for c in self.classes:
            if c.label == label:
                return c
        raise KeyError(label)

    def to_records(self) -> list[dict]:
        return [lm.to_record() for lm in self.landmarks]

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_records(), indent=1) + "\n")


def _make_shape(cspec: ClassSpec, xy: np.ndarray, rng: np.random.Generator) -> ShapeModel:
    lo, hi = cspec.size_bounds()
    size = lo + (hi - lo) * rng.random(lo.shape)
    yaw = rng.uniform(-math.pi, math.pi)
    if cspec.shape == "cylinder":
        return CylinderModel([xy[0], xy[1], 0.0], [0.0, 0.0, 1.0], size[0])
    if cspec.shape == "cuboid":
        return CuboidModel([0.0, 0.0, yaw], [xy[0], xy[1], 0.5 * size[2]], size)
    if cspec.shape == "ellipsoid":
        return EllipsoidModel([xy[0], xy[1], 0.5 * size[1]], size)
    raise ValueError(f"unknown shape kind {cspec.shape!r}")


def generate_world(spec: WorldSpec, seed: int) -> World:
    """Scatter landmarks uniformly in ``spec.bounds`` by rejection sampling.

    Pairwise centroid spacing (3D) is at least ``spec.min_spacing``. Raises
    :class:`PlacementFailure` once a landmark needs more than
    ``MAX_ATTEMPTS_PER_LANDMARK`` draws.
    """
    xmin, xmax, ymin, ymax = spec.bounds
    if xmax < xmin or ymax < ymin:
        raise ValueError(f"invalid bounds {spec.bounds}")
    rng = make_rng(seed, "world")
    landmarks: list[LandmarkTruth] = []
    placed = np.zeros((0, 3))
    next_id = 0
    for cspec in spec.classes:
        if cspec.count < 0:
            raise ValueError(f"negative landmark count for class {cspec.label!r}")
        for k in range(cspec.count):
            for _ in range(MAX_ATTEMPTS_PER_LANDMARK):
                xy = np.array([rng.uniform(xmin, xmax), rng.uniform(ymin, ymax)])
                shape = _make_shape(cspec, xy, rng)
                c = shape.centroid
                if len(placed) == 0 or np.min(np.linalg.norm(placed - c, axis=1)) >= spec.min_spacing:
                    break
            else:
                raise PlacementFailure(
                    f"could not place landmark {next_id} ({cspec.label}) with spacing "
                    f"{spec.min_spacing} m after {MAX_ATTEMPTS_PER_LANDMARK} attempts"
                )
            velocity = (0.0, 0.0, 0.0)
            if k < cspec.moving:
                heading = rng.uniform(-math.pi, math.pi)
                velocity = (cspec.speed * math.cos(heading), cspec.speed * math.sin(heading), 0.0)
            landmarks.append(LandmarkTruth(next_id, cspec.label, shape, velocity))
            placed = np.vstack([placed, c])
            next_id += 1
    return World(tuple(landmarks), tuple(spec.bounds), int(seed), tuple(spec.classes))


def load_world(path: str | Path, spec: WorldSpec | None = None, seed: int = 0) -> World:
    records = json.loads(Path(path).read_text())
    lms = tuple(LandmarkTruth.from_record(r) for r in records)
    if spec is None:
        return World(lms, (0.0, 0.0, 0.0, 0.0), seed)
    return World(lms, spec.bounds, seed, spec.classes)
