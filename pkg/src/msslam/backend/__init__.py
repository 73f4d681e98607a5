"""Factor graph back-end: factors, graph container and solver."""

from msslam.backend.factors import (
    cuboid_error,
    cylinder_error,
    ellipsoid_error,
    odometry_error,
    prior_error,
    update_ellipsoid_dims,
)
from msslam.backend.graph import (
    BackendConfig,
    Factor,
    FactorGraph,
    KeyPose,
    Landmark,
    NoiseConfig,
    associate,
)
from msslam.backend.solver import OptimizeResult, SolverConfig, optimize

__all__ = [
    "BackendConfig", "Factor", "FactorGraph", "KeyPose", "Landmark", "NoiseConfig",
    "OptimizeResult", "SolverConfig", "associate", "cuboid_error", "cylinder_error",
    "ellipsoid_error", "odometry_error", "optimize", "prior_error", "update_ellipsoid_dims",
]
