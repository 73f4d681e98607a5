"""Loop-closure result shared by both place recognition methods."""

from __future__ import annotations

import json
from dataclasses import dataclass, field

from msslam.geometry import Pose


@dataclass(frozen=True)
class LoopClosureResult:
    """Relative transform between two maps plus the landmark matches behind it.

    ``transform`` maps map-A coordinates into map-B coordinates
    (``b ~ transform.act(a)``).
    """

    transform: Pose
    matches: tuple[tuple[int, int], ...]
    score: int
    method: str = ""
    stats: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        if self.score != len(self.matches):
            raise ValueError("score must equal the number of matches")
        a = [m[0] for m in self.matches]
        b = [m[1] for m in self.matches]
        if len(set(a)) != len(a) or len(set(b)) != len(b):
            raise ValueError("matches must be one-to-one")

    def to_dict(self) -> dict:
        x, y, z, yaw = self.transform.xyz_yaw()
        return {"transform": [x, y, z, yaw], "score": self.score,
                "matches": [list(m) for m in self.matches]}

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_dict(cls, d: dict) -> "LoopClosureResult":
        x, y, z, yaw = d["transform"]
        return cls(Pose.from_xyz_yaw(x, y, z, yaw), tuple((int(a), int(b)) for a, b in d["matches"]),
                   int(d["score"]))
