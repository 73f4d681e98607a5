"""Anytime grid search over planar translations and yaw.

Candidates are visited ring by ring outward from the centre of the search
region, every yaw being tried for each ring. For each yaw, every compatible
landmark pair ``(a, b)`` implies a translation ``b - R a``; counting those
near a grid cell gives an upper bound on the greedy match score there, so
only cells whose bound can beat the incumbent are scored exactly.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass

import numpy as np

from msslam.errors import EmptyMap
from msslam.geometry import Pose, rot_z, wrap_angle
from msslam.maps import AssociationConfig, MapSnapshot
from msslam.placerec.align import fit_transform_4dof
from msslam.placerec.result import LoopClosureResult

TIE_EPS = 1e-9
# grid cells materialised per yaw when computing vote bounds
CHUNK_CELLS = 1_000_000


@dataclass(frozen=True)
class SearchRegion:
    """Box of planar translations and an interval of yaw angles.

    The yaw interval is half-open on the left: ``(yaw_min, yaw_max]``.
    """

    x_range: tuple[float, float]
    y_range: tuple[float, float]
    yaw_range: tuple[float, float] = (-math.pi, math.pi)
    xy_resolution: float = 0.25
    yaw_resolution: float = math.radians(2.0)

    def __post_init__(self):
        for lo, hi in (self.x_range, self.y_range):
            if not hi >= lo:
                raise ValueError("search ranges must be nonempty")
        if not self.yaw_range[1] > self.yaw_range[0] - 1e-12:
            raise ValueError("yaw range must be nonempty")
        if self.xy_resolution <= 0 or self.yaw_resolution <= 0:
            raise ValueError("resolutions must be positive")

    @classmethod
    def around(cls, half_xy: float, half_yaw: float = math.pi, center=(0.0, 0.0), **kw) -> "SearchRegion":
        cx, cy = center
        return cls((cx - half_xy, cx + half_xy), (cy - half_xy, cy + half_xy), (-half_yaw, half_yaw), **kw)

    @property
    def center(self) -> tuple[float, float]:
        return 0.5 * (self.x_range[0] + self.x_range[1]), 0.5 * (self.y_range[0] + self.y_range[1])

    def xy_steps(self) -> tuple[int, int, int, int]:
        """Grid index bounds relative to the centre cell: (ix_lo, ix_hi, iy_lo, iy_hi)."""
        cx, cy = self.center
        r = self.xy_resolution
        return (math.ceil((self.x_range[0] - cx) / r - 1e-9), math.floor((self.x_range[1] - cx) / r + 1e-9),
                math.ceil((self.y_range[0] - cy) / r - 1e-9), math.floor((self.y_range[1] - cy) / r + 1e-9))

    def yaws(self) -> np.ndarray:
        """Yaw grid: integer multiples of the resolution inside the interval."""
        lo, hi = self.yaw_range
        res = self.yaw_resolution
        k0 = math.floor(lo / res + 1e-9) + 1
        k1 = math.floor(hi / res + 1e-9)
        if k1 < k0:
            return np.array([0.5 * (lo + hi)])
        ks = np.arange(k0, k1 + 1)
        vals = ks * res
        if hi - lo >= 2 * math.pi - 1e-9:
            # full circle: keep one representative per direction
            vals = wrap_angle(vals)
            _, first = np.unique(np.round(vals, 9), return_index=True)
            vals = vals[np.sort(first)]
            vals = vals[np.argsort(vals, kind="stable")]
        return vals

    def n_rings(self) -> int:
        ix0, ix1, iy0, iy1 = self.xy_steps()
        return max(-ix0, ix1, -iy0, iy1) + 1


def zero_center(map_a: MapSnapshot, map_b: MapSnapshot, xy_resolution: float = 0.25,
                yaw_resolution: float = math.radians(2.0), max_half_range: float | None = None):
    """Shift both maps so their horizontal centroid means sit at the origin.

    Returns ``(centered_a, centered_b, offset_a, offset_b, region)``; the
    region covers every translation for which the two maps can overlap.
    """
    if not len(map_a) or not len(map_b):
        raise EmptyMap("zero_center needs at least one landmark in each map")
    ca, cb = map_a.centroids(), map_b.centroids()
    oa = ca[:, :2].mean(axis=0)
    ob = cb[:, :2].mean(axis=0)
    a = map_a.translated_xy(-oa[0], -oa[1])
    b = map_b.translated_xy(-ob[0], -ob[1])
    ra = np.max(np.linalg.norm(ca[:, :2] - oa, axis=1))
    rb = np.max(np.linalg.norm(cb[:, :2] - ob, axis=1))
    half = max(ra + rb, xy_resolution)
    if max_half_range is not None:
        half = min(half, max_half_range)
    region = SearchRegion((-half, half), (-half, half), (-math.pi, math.pi), xy_resolution, yaw_resolution)
    return a, b, (float(oa[0]), float(oa[1])), (float(ob[0]), float(ob[1])), region


def recompose(candidate: Pose, offset_a, offset_b) -> Pose:
    """Undo zero-centering: T = shift(ob) * T' * shift(-oa)."""
    return (Pose.from_translation(offset_b[0], offset_b[1], 0.0) @ candidate
            @ Pose.from_translation(-offset_a[0], -offset_a[1], 0.0))


def compatible_pairs(map_a: MapSnapshot, map_b: MapSnapshot, cfg: AssociationConfig):
    """Index pairs sharing label and shape kind within the model-difference gate.

    Returns ``(ia, ib, max_distance)`` arrays ordered by ``(ia, ib)``.
    """
    groups_b: dict[tuple[str, str], list[int]] = {}
    for j, lb in enumerate(map_b.landmarks):
        groups_b.setdefault((lb.label, lb.kind), []).append(j)
    groups_a: dict[tuple[str, str], list[int]] = {}
    for i, la in enumerate(map_a.landmarks):
        groups_a.setdefault((la.label, la.kind), []).append(i)
    ia, ib, thr = [], [], []
    for key, idx_a in groups_a.items():
        idx_b = groups_b.get(key)
        if not idx_b:
            continue
        sa = np.array([map_a.landmarks[i].size for i in idx_a])
        sb = np.array([map_b.landmarks[j].size for j in idx_b])
        denom = np.maximum(np.maximum(np.abs(sa[:, None, :]), np.abs(sb[None, :, :])), 1e-12)
        diff = np.max(np.abs(sa[:, None, :] - sb[None, :, :]) / denom, axis=2)
        ka, kb = np.nonzero(diff <= cfg.model(key[0]))
        ia.append(np.asarray(idx_a)[ka])
        ib.append(np.asarray(idx_b)[kb])
        thr.append(np.full(len(ka), cfg.distance(key[0])))
    if not ia:
        return np.zeros(0, int), np.zeros(0, int), np.zeros(0)
    ia, ib, thr = np.concatenate(ia), np.concatenate(ib), np.concatenate(thr)
    order = np.lexsort((ib, ia))
    return ia[order], ib[order], thr[order]


class _Pairs:
    """Label- and size-compatible landmark pairs of two maps."""

    def __init__(self, map_a: MapSnapshot, map_b: MapSnapshot, cfg: AssociationConfig):
        self.ia, self.ib, self.thr = compatible_pairs(map_a, map_b, cfg)
        self.a = map_a.centroids()[:, :2]
        self.b = map_b.centroids()[:, :2]
        self.ida = np.array(map_a.ids(), dtype=np.int64)
        self.idb = np.array(map_b.ids(), dtype=np.int64)

    def __len__(self):
        return len(self.ia)

    def offsets(self, yaw: float) -> np.ndarray:
        """Translation implied by each pair at this yaw."""
        R = rot_z(yaw)[:2, :2]
        return self.b[self.ib] - self.a[self.ia] @ R.T

    def score(self, t_ab: np.ndarray, tx: float, ty: float) -> tuple[int, float, list[tuple[int, int]]]:
        """Greedy one-to-one matching at translation (tx, ty)."""
        d = np.hypot(t_ab[:, 0] - tx, t_ab[:, 1] - ty)
        ok = np.nonzero(d <= self.thr)[0]
        if not len(ok):
            return 0, 0.0, []
        order = np.lexsort((self.idb[self.ib[ok]], self.ida[self.ia[ok]], d[ok]))
        used_a, used_b = set(), set()
        matches, resid = [], 0.0
        for k in ok[order]:
            i, j = self.ia[k], self.ib[k]
            if i in used_a or j in used_b:
                continue
            used_a.add(i)
            used_b.add(j)
            matches.append((i, j))
            resid += d[k]
        return len(matches), resid, matches


def score_transform(map_a: MapSnapshot, map_b: MapSnapshot, candidate, cfg: AssociationConfig | None = None):
    """Greedy one-to-one match count of ``map_a`` moved by ``candidate = (x, y, yaw)``.

    Distances are horizontal; heights are left untouched. Returns
    ``(score, matches)`` with matches as ``(id_a, id_b)`` pairs.
    """
    cfg = cfg or AssociationConfig()
    pairs = _Pairs(map_a, map_b, cfg)
    if not len(pairs):
        return 0, []
    x, y, yaw = candidate
    n, _, m = pairs.score(pairs.offsets(yaw), x, y)
    ids = [(int(pairs.ida[i]), int(pairs.idb[j])) for i, j in m]
    return n, sorted(ids)


def _ring_cells(r: int, bounds) -> np.ndarray:
    """Cells with Chebyshev radius ``r`` inside bounds, in a fixed order."""
    ix0, ix1, iy0, iy1 = bounds
    if r == 0:
        cells = [(0, 0)]
    else:
        side = np.arange(-r, r + 1)
        cells = ([(i, -r) for i in side] + [(r, j) for j in side[1:]]
                 + [(i, r) for i in side[-2::-1]] + [(-r, j) for j in side[-2:0:-1]])
    arr = np.array(cells, dtype=int).reshape(-1, 2)
    keep = (arr[:, 0] >= ix0) & (arr[:, 0] <= ix1) & (arr[:, 1] >= iy0) & (arr[:, 1] <= iy1)
    return arr[keep]


def _box_bounds(t_ab, thr_max, center, res, r_hi):
    """Pair-vote upper bound on every cell with ring index up to ``r_hi``.

    Returns an array indexed ``[ix + r_hi, iy + r_hi]``.
    """
    side = 2 * r_hi + 1
    R = int(math.ceil((thr_max + 0.5 * res) / res))
    g = np.rint((t_ab - np.asarray(center)) / res).astype(np.int64)
    lo, hi = -r_hi - R, r_hi + R
    ok = (g[:, 0] >= lo) & (g[:, 0] <= hi) & (g[:, 1] >= lo) & (g[:, 1] <= hi)
    g = g[ok] - lo
    n = side + 2 * R
    hist = np.bincount(g[:, 0] * n + g[:, 1], minlength=n * n).reshape(n, n)
    cs = np.zeros((n + 1, n + 1), dtype=np.int64)
    cs[1:, 1:] = hist.cumsum(0).cumsum(1)
    w = 2 * R + 1
    return cs[w:w + side, w:w + side] - cs[0:side, w:w + side] - cs[w:w + side, 0:side] + cs[0:side, 0:side]


def slidematch(map_a: MapSnapshot, map_b: MapSnapshot, region: SearchRegion | None = None,
               budget_ms: float | None = None, min_inliers: int = 5,
               assoc: AssociationConfig | None = None, max_rings: int | None = None,
               xy_resolution: float = 0.25, yaw_resolution: float = math.radians(2.0)) -> LoopClosureResult | None:
    """Search for the planar transform taking map A onto map B.

    Without ``region`` both maps are zero-centred first and the region is
    derived from their extents; with a region the maps are searched in their
    own coordinates. The budget is checked between rings, so results for a
    fixed number of completed rings are reproducible; ``max_rings`` gives a
    purely deterministic cap.

    The best candidate maximises the match count, then minimises the summed
    match distance. The returned transform is refined by a least-squares fit
    on the matched centroids; the raw grid candidate is kept in
    ``stats["grid"]`` as ``[x, y, yaw]`` in the search frame.
    """
    if min_inliers < 3:
        raise ValueError("min_inliers must be >= 3")
    cfg = assoc or AssociationConfig()
    if not len(map_a) or not len(map_b):
        return None
    oa, ob = (0.0, 0.0), (0.0, 0.0)
    search_a, search_b = map_a, map_b
    if region is None:
        search_a, search_b, oa, ob, region = zero_center(map_a, map_b, xy_resolution, yaw_resolution)
    pairs = _Pairs(search_a, search_b, cfg)
    if len(pairs) == 0:
        return None

    t0 = time.perf_counter()
    bounds = region.xy_steps()
    res = region.xy_resolution
    cx, cy = region.center
    yaws = region.yaws()
    thr_max = float(pairs.thr.max())
    cap = min(len(np.unique(pairs.ia)), len(np.unique(pairs.ib)))
    n_rings = region.n_rings() if max_rings is None else min(region.n_rings(), max_rings)

    best = (0, math.inf, None, None)  # score, residual, (x, y, yaw), matches
    evaluated = 0
    rings_done = 0
    r = 0
    while r < n_rings:
        # rings sharing one vote-grid computation
        r_hi = r
        while r_hi + 1 < n_rings and (2 * (r_hi + 1) + 1) ** 2 <= CHUNK_CELLS and r_hi - r < 32:
            r_hi += 1
        chunk = [(q, _ring_cells(q, bounds)) for q in range(r, r_hi + 1)]
        ring_vals = [np.zeros((len(yaws), len(cells)), dtype=np.int64) for _, cells in chunk]
        offs = []
        for k, yaw in enumerate(yaws):
            t_ab = pairs.offsets(yaw)
            offs.append(t_ab)
            ub = _box_bounds(t_ab, thr_max, (cx, cy), res, r_hi)
            for (q, cells), vals in zip(chunk, ring_vals):
                vals[k] = ub[cells[:, 0] + r_hi, cells[:, 1] + r_hi]
        stop = False
        for (q, cells), vals in zip(chunk, ring_vals):
            if len(cells):
                cand = np.argwhere(vals >= max(best[0], 1))
                if len(cand):
                    order = np.lexsort((cand[:, 1], cand[:, 0], -vals[cand[:, 0], cand[:, 1]]))
                    for k, c in cand[order]:
                        if vals[k, c] < best[0]:
                            break
                        tx = float(cx + cells[c, 0] * res)
                        ty = float(cy + cells[c, 1] * res)
                        n, resid, m = pairs.score(offs[k], tx, ty)
                        evaluated += 1
                        if n > best[0] or (n == best[0] and n > 0 and resid < best[1] - TIE_EPS):
                            best = (n, resid, (tx, ty, float(yaws[k])), m)
                # nothing in this ring could tie a full-score incumbent
                if best[0] >= cap and not np.any(vals >= best[0]) and q > 0:
                    stop = True
            rings_done = q + 1
            if stop:
                break
            if budget_ms is not None and (time.perf_counter() - t0) * 1000.0 >= budget_ms:
                stop = True
                break
        if stop:
            break
        r = r_hi + 1

    score, resid, grid, m = best
    stats = {"grid": [float(v) for v in grid] if grid else None, "rings": rings_done, "evaluated": evaluated,
             "offset_a": list(oa), "offset_b": list(ob), "pairs": len(pairs),
             "elapsed_ms": (time.perf_counter() - t0) * 1000.0}
    if score < min_inliers:
        return None
    ca, cb = map_a.centroids(), map_b.centroids()
    fit = fit_transform_4dof(ca[[i for i, _ in m]], cb[[j for _, j in m]])
    grid_pose = recompose(Pose.from_xyz_yaw(grid[0], grid[1], 0.0, grid[2]), oa, ob)
    stats["grid_transform"] = [float(v) for v in grid_pose.xyz_yaw()]
    matches = tuple(sorted((int(pairs.ida[i]), int(pairs.idb[j])) for i, j in m))
    return LoopClosureResult(fit.pose, matches, score, "slidematch", stats)
