"""Exception hierarchy shared by all rollfusion modules."""


class RollFusionError(Exception):
    """Base class for all rollfusion errors."""


class ConfigError(RollFusionError):
    """Invalid or inconsistent run configuration (CLI exit code 2)."""


class DataError(RollFusionError):
    """Malformed input data: bad schema, non-monotone time, empty file (CLI exit code 3)."""


class InvariantViolation(RollFusionError):
    """A runtime invariant that must always hold was violated (CLI exit code 4)."""


class DegenerateCourseError(RollFusionError):
    """Horizontal speed below the floor: the course angle is not defined.

    Callers are expected to hold the last valid estimate.
    """


class CoordinationError(RollFusionError):
    """The coordinated-manoeuvre denominator dropped below its floor.

    Carries ``last_valid`` (the most recent good roll value, or None) so
    callers can hold it.
    """

    def __init__(self, message: str, last_valid: float | None = None):
        super().__init__(message)
        self.last_valid = last_valid


class InsufficientDataError(RollFusionError):
    """Not enough samples for the requested fit (window not full, n < 3)."""


class IllConditionedError(RollFusionError):
    """A normal matrix or Jacobian is singular / numerically unusable."""


class SpdViolationError(InvariantViolation):
    """A matrix that must be symmetric positive definite is not."""


class StepSizeError(RollFusionError):
    """An integration step destroyed positive definiteness; retry with smaller dt."""


class TrackGeometryError(ConfigError):
    """Track segment list cannot form a closed C1 circuit."""


class InfeasibleProfileError(ConfigError):
    """No speed profile satisfies the given physical limits."""


class InfeasibleTrajectoryError(RollFusionError):
    """Generated truth violates the coordinated-manoeuvre floor somewhere on the path."""


class OutOfRangeError(RollFusionError):
    """Root-finder target lies outside the bracket where a unique root exists."""
