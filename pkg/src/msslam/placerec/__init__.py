"""Semantic place recognition between object maps."""

from msslam.placerec.align import FitResult, alignment_rms, fit_transform_4dof
from msslam.placerec.clique import consistency_refine, max_clique
from msslam.placerec.delaunay import (
    CandidateSet,
    SimplexDescriptor,
    all_to_all_count,
    build_descriptors,
    delaunay,
    match_descriptors,
)
from msslam.placerec.result import LoopClosureResult
from msslam.placerec.slidegraph import SlideGraphConfig, safe_slidegraph, slidegraph
from msslam.placerec.slidematch import SearchRegion, score_transform, slidematch, zero_center

__all__ = [
    "CandidateSet", "FitResult", "LoopClosureResult", "SearchRegion", "SimplexDescriptor",
    "SlideGraphConfig", "alignment_rms", "all_to_all_count", "build_descriptors", "consistency_refine",
    "delaunay", "fit_transform_4dof", "match_descriptors", "max_clique", "safe_slidegraph",
    "score_transform", "slidegraph", "slidematch", "zero_center",
]
