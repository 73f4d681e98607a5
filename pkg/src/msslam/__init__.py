"""Sparse object-level metric-semantic SLAM for robot teams.

Subpackages:

- ``geometry``  SE(3) utilities and the cuboid / cylinder / ellipsoid shape models
- ``worldsim``  synthetic worlds, trajectories, detections and instance tracking
- ``backend``   object factor graph and Levenberg-Marquardt solver
- ``placerec``  SlideMatch, SlideGraph and 4-DoF map alignment
- ``swarm``     per-robot databases, peer messages and map merging
- ``bench``     scenarios, runner, metrics, plotting and the command line
"""

__version__ = "0.1.0"
