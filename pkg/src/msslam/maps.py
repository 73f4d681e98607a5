"""Landmark records, map snapshots and association thresholds.

These types are shared by the back-end (which produces snapshots), place
recognition (which consumes them) and the swarm layer (which ships them).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from msslam.geometry import Pose, ShapeModel, shape_from_params


def model_difference(size_a, size_b) -> float:
    """Largest relative difference between two shape-size vectors."""
    a = np.asarray(size_a, dtype=float)
    b = np.asarray(size_b, dtype=float)
    if a.shape != b.shape:
        return float("inf")
    denom = np.maximum(np.maximum(np.abs(a), np.abs(b)), 1e-12)
    return float(np.max(np.abs(a - b) / denom)) if a.size else 0.0


@dataclass(frozen=True)
class AssociationConfig:
    """Gates for matching two object models of the same class.

    ``per_class`` maps a label to ``(max_centroid_distance,
    max_model_difference)`` overriding the defaults.
    """

    max_centroid_distance: float = 1.0
    max_model_difference: float = 0.5
    per_class: Mapping[str, tuple[float, float]] = field(default_factory=dict)

    def __post_init__(self):
        if self.max_centroid_distance <= 0 or self.max_model_difference <= 0:
            raise ValueError("association thresholds must be positive")
        for label, (d, m) in self.per_class.items():
            if d <= 0 or m <= 0:
                raise ValueError(f"association thresholds for {label!r} must be positive")

    def distance(self, label: str) -> float:
        return self.per_class[label][0] if label in self.per_class else self.max_centroid_distance

    def model(self, label: str) -> float:
        return self.per_class[label][1] if label in self.per_class else self.max_model_difference

    def max_distance(self) -> float:
        return max([self.max_centroid_distance] + [v[0] for v in self.per_class.values()])

    @classmethod
    def from_dict(cls, d: dict) -> "AssociationConfig":
        return cls(
            max_centroid_distance=float(d.get("max_centroid_distance", 1.0)),
            max_model_difference=float(d.get("max_model_difference", 0.5)),
            per_class={k: (float(v[0]), float(v[1])) for k, v in d.get("per_class", {}).items()},
        )


@dataclass(frozen=True)
class LandmarkRecord:
    id: int
    label: str
    kind: str
    params: tuple[float, ...]
    observation_count: int = 1

    @classmethod
    def from_shape(cls, id: int, label: str, shape: ShapeModel, observation_count: int = 1):
        return cls(int(id), label, shape.kind, tuple(float(v) for v in shape.params), int(observation_count))

    @property
    def shape(self) -> ShapeModel:
        return shape_from_params(self.kind, self.params)

    @property
    def centroid(self) -> np.ndarray:
        return np.asarray(self.params[:3] if self.kind != "cuboid" else self.params[3:6], dtype=float)

    @property
    def size(self) -> np.ndarray:
        p = self.params
        if self.kind == "cuboid":
            return np.asarray(p[6:9], dtype=float)
        if self.kind == "cylinder":
            return np.asarray(p[6:7], dtype=float)
        return np.asarray(p[3:5], dtype=float)

    @property
    def confirmed(self) -> bool:
        return self.observation_count > 1

    def transformed(self, T: Pose) -> "LandmarkRecord":
        return LandmarkRecord.from_shape(self.id, self.label, self.shape.transformed(T), self.observation_count)

    def to_record(self) -> dict:
        return {"id": self.id, "class": self.label, "shape_kind": self.kind,
                "params": list(self.params), "observation_count": self.observation_count,
                "confirmed": self.confirmed}

    @classmethod
    def from_record(cls, rec: dict) -> "LandmarkRecord":
        return cls(int(rec["id"]), rec["class"], rec["shape_kind"],
                   tuple(float(v) for v in rec["params"]), int(rec.get("observation_count", 1)))


@dataclass(frozen=True)
class MapSnapshot:
    """Immutable copy of one robot's object map."""

    robot_id: int
    landmarks: tuple[LandmarkRecord, ...] = ()

    def __post_init__(self):
        for lm in self.landmarks:
            if not np.all(np.isfinite(lm.params)):
                raise ValueError(f"landmark {lm.id} has non-finite parameters")

    def __len__(self) -> int:
        return len(self.landmarks)

    def centroids(self) -> np.ndarray:
        if not self.landmarks:
            return np.zeros((0, 3))
        return np.array([lm.centroid for lm in self.landmarks])

    def labels(self) -> list[str]:
        return [lm.label for lm in self.landmarks]

    def ids(self) -> list[int]:
        return [lm.id for lm in self.landmarks]

    def by_id(self) -> dict[int, LandmarkRecord]:
        return {lm.id: lm for lm in self.landmarks}

    def transformed(self, T: Pose) -> "MapSnapshot":
        return MapSnapshot(self.robot_id, tuple(lm.transformed(T) for lm in self.landmarks))

    def translated_xy(self, dx: float, dy: float) -> "MapSnapshot":
        return self.transformed(Pose.from_translation(dx, dy, 0.0))

    def to_records(self) -> list[dict]:
        return [lm.to_record() for lm in self.landmarks]

    def to_json(self) -> str:
        return json.dumps({"robot_id": self.robot_id, "landmarks": self.to_records()})

    @classmethod
    def from_records(cls, robot_id: int, records) -> "MapSnapshot":
        return cls(int(robot_id), tuple(LandmarkRecord.from_record(r) for r in records))

    @classmethod
    def from_json(cls, text: str) -> "MapSnapshot":
        d = json.loads(text)
        return cls.from_records(d["robot_id"], d["landmarks"])
