"""Exception hierarchy.

Exit-code mapping used by the CLI: configuration problems -> 2,
solver failures and aborted runs -> 3.
"""


class CablescanError(Exception):
    """Base class for all package errors."""


class ConfigurationError(CablescanError):
    """Invalid or inconsistent configuration value."""


class WorkspaceError(CablescanError):
    """Pose outside the scaffold workspace, or cable lengths not achievable."""


class DegenerateGeometryError(CablescanError):
    """Anchor coincides with an attachment point (zero-length tendon)."""


class SolverError(CablescanError):
    """Iterative solver failed to converge."""


class WrenchInfeasibleError(CablescanError):
    """No nonnegative tension set can balance the requested wrench."""


class SensorFaultError(CablescanError):
    """Physically impossible sensor reading (e.g. negative load-cell force)."""


class InsufficientDataError(CablescanError):
    """Not enough samples for the requested statistic."""


class CalibrationError(CablescanError):
    """Threshold calibration ran on an invalid scenario (e.g. contact occurred)."""


class BackStepStuckError(CablescanError):
    """Contact-force estimate stopped decreasing during back-stepping."""
