"""Synthetic worlds, robot trajectories and the detection front-end."""

from msslam.worldsim.sensor import Detection, SensorModel, simulate_detections
from msslam.worldsim.tracking import Track, Tracker, hungarian_assign, reject_elongated, track_update
from msslam.worldsim.trajectory import Trajectory, generate_trajectory, interpolate_key_poses
from msslam.worldsim.world import ClassSpec, LandmarkTruth, World, WorldSpec, generate_world, load_world

__all__ = [
    "ClassSpec", "Detection", "LandmarkTruth", "SensorModel", "Track", "Tracker", "Trajectory",
    "World", "WorldSpec", "generate_trajectory", "generate_world", "hungarian_assign",
    "interpolate_key_poses", "load_world", "reject_elongated", "simulate_detections", "track_update",
]
