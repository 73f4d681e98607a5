"""Exception types raised across the package."""


class MSSlamError(Exception):
    """Base class for all package errors."""


class NearPiRotation(MSSlamError):
    """Rotation angle too close to pi for a well-conditioned log map."""


class ZeroRange(MSSlamError):
    """Landmark centroid coincides with the sensor origin."""


class SingularSystem(MSSlamError):
    """Damped normal equations could not be solved."""


class PlacementFailure(MSSlamError):
    """World generation could not satisfy the spacing constraint."""


class DegenerateTrajectory(MSSlamError):
    """Trajectory shorter than a single key-pose spacing."""


class DegenerateInput(MSSlamError):
    """Point set is collinear / coplanar or too small for triangulation."""


class DegeneratePairs(MSSlamError):
    """Correspondences do not constrain yaw."""


class HypothesisOverflow(MSSlamError):
    """Too many candidate associations for the consistency graph."""


class EmptyMap(MSSlamError):
    """A map without landmarks was passed where one is required."""


class GapInRecords(MSSlamError):
    """Peer records are not contiguous with what was received before."""


class LengthMismatch(MSSlamError):
    """Trajectories passed for comparison differ in length."""


class ConfigError(MSSlamError):
    """Invalid scenario or configuration; ``path`` names the offending field."""

    def __init__(self, message: str, path: str = ""):
        self.path = path
        super().__init__(f"{path}: {message}" if path else message)


class IoError(MSSlamError):
    """Run artifacts are missing or unreadable."""
