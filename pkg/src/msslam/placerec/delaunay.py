"""Delaunay simplices of landmark centroids and their rigid-motion invariant descriptors."""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass

import numpy as np
from scipy.spatial import Delaunay, QhullError, cKDTree

from msslam.errors import DegenerateInput
from msslam.maps import MapSnapshot

RANK_TOL = 1e-9
MODE_SPREAD_3D = 2.0


def delaunay(points) -> np.ndarray:
    """Delaunay simplices (rows of point indices) of 2-D or 3-D points."""
    pts = np.asarray(points, dtype=float)
    if pts.ndim != 2 or pts.shape[1] not in (2, 3):
        raise ValueError("points must be an (N, 2) or (N, 3) array")
    dim = pts.shape[1]
    if len(pts) < dim + 1:
        raise DegenerateInput(f"need at least {dim + 1} points, got {len(pts)}")
    centered = pts - pts.mean(axis=0)
    sv = np.linalg.svd(centered, compute_uv=False)
    scale = max(float(sv[0]), 1.0)
    if sv[-1] <= RANK_TOL * scale:
        raise DegenerateInput("points are collinear" if dim == 2 else "points are coplanar")
    try:
        tri = Delaunay(pts)
    except QhullError as exc:
        raise DegenerateInput(str(exc)) from exc
    simplices = np.sort(tri.simplices, axis=1)
    return simplices[np.lexsort(simplices.T[::-1])]


def circumsphere(vertices: np.ndarray) -> tuple[np.ndarray, float]:
    """Centre and radius of the circle/sphere through a simplex's vertices."""
    v = np.asarray(vertices, dtype=float)
    A = 2.0 * (v[1:] - v[0])
    b = np.sum(v[1:] ** 2 - v[0] ** 2, axis=1)
    c = np.linalg.solve(A, b)
    return c, float(np.linalg.norm(v[0] - c))


@dataclass(frozen=True)
class SimplexDescriptor:
    ids: tuple[int, ...]
    distances: tuple[float, ...]
    labels: tuple[str, ...]

    def __post_init__(self):
        if len(self.ids) != len(self.distances) or len(self.ids) != len(self.labels):
            raise ValueError("descriptor fields must have equal length")
        if any(b < a for a, b in zip(self.distances, self.distances[1:])):
            raise ValueError("descriptor distances must be sorted ascending")


def choose_mode(snapshot: MapSnapshot) -> str:
    c = snapshot.centroids()
    if len(c) and float(np.ptp(c[:, 2])) > MODE_SPREAD_3D:
        return "3d"
    return "2d"


def build_descriptors(snapshot: MapSnapshot, mode: str = "2d") -> list[SimplexDescriptor]:
    """One descriptor per Delaunay simplex of the map's centroids.

    Vertices are ordered by distance to the simplex centroid; equal
    distances are ordered by label, then landmark id.
    """
    mode = mode.lower()
    if mode not in ("2d", "3d"):
        raise ValueError(f"unknown descriptor mode {mode!r}")
    c = snapshot.centroids()
    pts = c[:, :2] if mode == "2d" else c
    simplices = delaunay(pts)
    ids = snapshot.ids()
    labels = snapshot.labels()
    out = []
    for s in simplices:
        v = pts[s]
        d = np.linalg.norm(v - v.mean(axis=0), axis=1)
        order = sorted(range(len(s)), key=lambda k: (d[k], labels[s[k]], ids[s[k]]))
        out.append(SimplexDescriptor(tuple(int(ids[s[k]]) for k in order),
                                     tuple(float(d[k]) for k in order),
                                     tuple(labels[s[k]] for k in order)))
    return out


@dataclass(frozen=True)
class CandidateSet:
    """Landmark id pairs proposed by descriptor matching, with vote counts."""

    pairs: tuple[tuple[int, int], ...]
    votes: tuple[int, ...]
    descriptor_matches: int = 0

    def __len__(self) -> int:
        return len(self.pairs)


def match_descriptors(desc_a: list[SimplexDescriptor], desc_b: list[SimplexDescriptor],
                      dist_tol: float) -> CandidateSet:
    """Pair up simplices with near-equal distance signatures and equal label multisets.

    Each matched simplex pair contributes its rank-aligned vertex pairs
    whose labels agree.
    """
    if dist_tol <= 0:
        raise ValueError("dist_tol must be positive")
    if not desc_a or not desc_b:
        return CandidateSet((), ())
    db = np.array([d.distances for d in desc_b])
    da = np.array([d.distances for d in desc_a])
    if db.shape[1] != da.shape[1]:
        raise ValueError("descriptor orders differ")
    tree = cKDTree(db)
    hits = tree.query_ball_point(da, r=dist_tol, p=np.inf)
    votes: Counter = Counter()
    n_match = 0
    multiset_b = [tuple(sorted(d.labels)) for d in desc_b]
    for i, js in enumerate(hits):
        a = desc_a[i]
        ms_a = tuple(sorted(a.labels))
        for j in sorted(js):
            b = desc_b[j]
            if multiset_b[j] != ms_a:
                continue
            # tolerance test repeated exactly, the tree query is inclusive up to rounding
            if max(abs(x - y) for x, y in zip(a.distances, b.distances)) > dist_tol:
                continue
            n_match += 1
            for ka, kb, la, lb in zip(a.ids, b.ids, a.labels, b.labels):
                if la == lb:
                    votes[(ka, kb)] += 1
    pairs = sorted(votes)
    return CandidateSet(tuple(pairs), tuple(votes[p] for p in pairs), n_match)


def all_to_all_count(map_a: MapSnapshot, map_b: MapSnapshot) -> int:
    """Number of same-label pairs: the hypothesis count without descriptors."""
    ca, cb = Counter(map_a.labels()), Counter(map_b.labels())
    return sum(n * cb.get(lab, 0) for lab, n in ca.items())
