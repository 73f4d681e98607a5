"""Place recognition from Delaunay descriptors and a pairwise-consistency clique."""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from msslam.errors import DegenerateInput
from msslam.maps import MapSnapshot
from msslam.placerec.align import fit_transform_4dof
from msslam.placerec.clique import DEFAULT_MAX_NODES, consistency_refine
from msslam.placerec.delaunay import all_to_all_count, build_descriptors, choose_mode, match_descriptors
from msslam.placerec.result import LoopClosureResult

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class SlideGraphConfig:
    dist_tol: float = 0.3
    epsilon: float = 0.5
    min_inliers: int = 5
    max_hypotheses: int = DEFAULT_MAX_NODES
    mode: str = "auto"

    def __post_init__(self):
        if self.dist_tol <= 0 or self.epsilon <= 0:
            raise ValueError("dist_tol and epsilon must be positive")
        if self.min_inliers < 3:
            raise ValueError("min_inliers must be >= 3")
        if self.mode not in ("auto", "2d", "3d"):
            raise ValueError(f"unknown mode {self.mode!r}")


def _prune_by_residual(pairs, ca: dict, cb: dict, tol: float):
    """Refit after dropping pairs the fitted transform places further than ``tol``."""
    for _ in range(3):
        a = np.array([ca[i] for i, _ in pairs])
        b = np.array([cb[j] for _, j in pairs])
        fit = fit_transform_4dof(a, b)
        res = np.linalg.norm(fit.pose.act(a) - b, axis=1)
        keep = res <= tol
        if keep.all() or keep.sum() < 2:
            return pairs, fit
        pairs = [p for p, k in zip(pairs, keep) if k]
    a = np.array([ca[i] for i, _ in pairs])
    b = np.array([cb[j] for _, j in pairs])
    return pairs, fit_transform_4dof(a, b)


def slidegraph(map_a: MapSnapshot, map_b: MapSnapshot, cfg: SlideGraphConfig | None = None) -> LoopClosureResult | None:
    """Relative transform taking map A onto map B, or ``None`` without enough inliers."""
    cfg = cfg or SlideGraphConfig()
    mode = cfg.mode
    if mode == "auto":
        mode = "3d" if "3d" in (choose_mode(map_a), choose_mode(map_b)) else "2d"
    desc_a = build_descriptors(map_a, mode)
    desc_b = build_descriptors(map_b, mode)
    cands = match_descriptors(desc_a, desc_b, cfg.dist_tol)
    stats = {"mode": mode, "descriptors_a": len(desc_a), "descriptors_b": len(desc_b),
             "descriptor_matches": cands.descriptor_matches, "candidates": len(cands),
             "all_to_all": all_to_all_count(map_a, map_b)}
    log.debug("slidegraph hypotheses: %d of %d same-label pairs", len(cands), stats["all_to_all"])
    if not len(cands):
        return None
    inliers = consistency_refine(cands, map_a, map_b, cfg.epsilon, cfg.max_hypotheses)
    stats["clique"] = len(inliers)
    if len(inliers) < cfg.min_inliers:
        return None
    ca = {lm.id: lm.centroid for lm in map_a.landmarks}
    cb = {lm.id: lm.centroid for lm in map_b.landmarks}
    inliers, fit = _prune_by_residual(inliers, ca, cb, cfg.epsilon)
    if len(inliers) < cfg.min_inliers:
        return None
    return LoopClosureResult(fit.pose, tuple(sorted(inliers)), len(inliers), "slidegraph", stats)


def safe_slidegraph(map_a: MapSnapshot, map_b: MapSnapshot, cfg: SlideGraphConfig | None = None):
    """Like :func:`slidegraph` but maps with too few landmarks give ``None``."""
    try:
        return slidegraph(map_a, map_b, cfg)
    except DegenerateInput:
        return None
