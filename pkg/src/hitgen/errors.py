"""Exception types shared across the package."""


class HitgenError(Exception):
    """Base class for all package-specific errors."""


class CoincidentPointsError(HitgenError):
    """Green-kernel evaluation requested below the separation floor."""


class QuadratureError(HitgenError):
    """Green-kernel quadrature could not meet its accuracy contract."""


class DriftOverflowError(HitgenError):
    """A drift evaluation exceeded the configured norm bound."""


class PreconditionError(HitgenError):
    """An operation was called on a state outside its admissible set."""


class EmptyDataError(HitgenError):
    """A point cloud with no points was supplied."""


class GenerationFailedError(HitgenError):
    """Backward generation hit the step cap before hitting the support."""


class InitializationError(HitgenError):
    """Could not draw an initial state outside the estimated support."""


class CheckpointError(HitgenError):
    """Malformed or incompatible checkpoint / support file."""
