"""Instance tracking across key poses.

Detections are associated to tracks frame by frame with a minimum-cost
assignment on centroid distance. Only tracks seen often enough are passed on
to the back-end, and tracks whose centroids smear out beyond the class size
are treated as moving objects and dropped.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linear_sum_assignment

from msslam.geometry import Pose
from msslam.worldsim.sensor import Detection


def hungarian_assign(cost) -> list[tuple[int, int]]:
    """Minimum-cost one-to-one assignment of rows to columns.

    ``+inf`` marks a forbidden pairing. The result has the largest possible
    number of allowed pairs and, among those, the smallest total cost. Pairs
    are returned sorted by row.
    """
    c = np.asarray(cost, dtype=float)
    if c.ndim != 2:
        raise ValueError("cost must be a 2-D matrix")
    if c.size == 0:
        return []
    if np.any(np.isnan(c)) or np.any(c < 0):
        raise ValueError("cost entries must be non-negative or +inf")
    allowed = np.isfinite(c)
    if not allowed.any():
        return []
    finite = c[allowed]
    # one forbidden pair must outweigh any total of allowed ones
    big = (float(finite.sum()) + 1.0) * (min(c.shape) + 1)
    work = np.where(allowed, c, big)
    rows, cols = linear_sum_assignment(work)
    return [(int(r), int(k)) for r, k in zip(rows, cols) if allowed[r, k]]


def assignment_cost(cost, pairs) -> float:
    c = np.asarray(cost, dtype=float)
    return float(sum(c[r, k] for r, k in pairs))


@dataclass
class Track:
    track_id: int
    label: str
    history: list[tuple[int, Detection, np.ndarray]] = field(default_factory=list)
    confirmed: bool = False
    rejected: bool = False

    @property
    def hits(self) -> int:
        return len(self.history)

    @property
    def last_frame(self) -> int:
        return self.history[-1][0]

    @property
    def centroid(self) -> np.ndarray:
        return self.history[-1][2]

    @property
    def extent(self) -> float:
        """Diagonal of the bounding box of all observed centroids."""
        pts = np.array([h[2] for h in self.history])
        return float(np.linalg.norm(pts.max(axis=0) - pts.min(axis=0)))


def reject_elongated(instance: Track, class_max_extent: float) -> bool:
    """True when the track's centroid spread exceeds ``class_max_extent``."""
    return instance.extent > class_max_extent


@dataclass
class Tracker:
    """Front-end instance tracker working in the odometry frame."""

    gate: float = 1.0
    confirm_threshold: int = 3
    max_age: int = 5
    class_max_extent: dict[str, float] = field(default_factory=dict)
    default_max_extent: float = math.inf
    tracks: list[Track] = field(default_factory=list)
    _next_id: int = 0

    def __post_init__(self):
        if self.gate <= 0:
            raise ValueError("gate must be positive")

    def update(self, detections: list[Detection], frame: int,
               odom_pose: Pose | None = None) -> list[tuple[Track, Detection]]:
        """Associate one frame of detections and return confirmed ones.

        The returned list holds ``(track, detection)`` for every detection of
        this frame whose track is confirmed and not rejected as moving.
        """
        to_odom = odom_pose or Pose.identity()
        cents = np.array([to_odom.act(d.shape.centroid) for d in detections]).reshape(-1, 3)
        # rejected tracks keep absorbing their object's detections
        live = list(self.tracks)
        cost = np.full((len(live), len(detections)), np.inf)
        for i, trk in enumerate(live):
            if not len(detections):
                break
            dist = np.linalg.norm(cents - trk.centroid, axis=1)
            ok = (dist <= self.gate) & np.array([d.class_label == trk.label for d in detections])
            cost[i, ok] = dist[ok]
        pairs = hungarian_assign(cost) if cost.size else []
        matched = set()
        for i, j in pairs:
            live[i].history.append((frame, detections[j], cents[j]))
            matched.add(j)
        for j, det in enumerate(detections):
            if j not in matched:
                self.tracks.append(Track(self._next_id, det.class_label, [(frame, det, cents[j])]))
                self._next_id += 1

        emitted: list[tuple[Track, Detection]] = []
        for trk in self.tracks:
            if trk.rejected or trk.last_frame != frame:
                continue
            if trk.hits >= self.confirm_threshold:
                trk.confirmed = True
            if trk.confirmed:
                limit = self.class_max_extent.get(trk.label, self.default_max_extent)
                if reject_elongated(trk, limit):
                    trk.rejected = True
                    continue
                emitted.append((trk, trk.history[-1][1]))
        self.tracks = [t for t in self.tracks if frame - t.last_frame <= self.max_age]
        return emitted

    def confirmed(self) -> list[Track]:
        return [t for t in self.tracks if t.confirmed and not t.rejected]


def track_update(tracks: list[Track], detections: list[Detection], gate: float, frame: int = 0,
                 confirm_threshold: int = 3, max_age: int = 5) -> tuple[list[Track], list[Track]]:
    """Functional form of :meth:`Tracker.update` on centroids in a shared frame."""
    next_id = max((t.track_id for t in tracks), default=-1) + 1
    tr = Tracker(gate=gate, confirm_threshold=confirm_threshold, max_age=max_age,
                 tracks=list(tracks), _next_id=next_id)
    tr.update(detections, frame)
    return tr.tracks, tr.confirmed()
