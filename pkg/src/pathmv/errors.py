"""Exception types shared across the package.

Every error raised by this package derives from :class:`PathMVError`, so
callers can catch one base class.  Subclasses also inherit from the matching
builtin (``ValueError``, ``RuntimeError``, ...) to stay friendly to generic
handlers.
"""

__all__ = [
    "PathMVError",
    "DomainError",
    "GridDomainError",
    "ConfigurationError",
    "UnsupportedInputError",
    "ResourceLimitError",
    "LineageMismatchError",
    "InternalConsistencyError",
    "AccumulatorSyncError",
    "SimulationDivergedError",
]


class PathMVError(Exception):
    """Base class for all errors raised by this package."""


class DomainError(PathMVError, ValueError):
    """An argument lies outside the mathematical domain of an operation."""


class GridDomainError(DomainError):
    """A time or knot index falls outside the grid it is evaluated on."""


class ConfigurationError(PathMVError, ValueError):
    """Invalid parameters at construction or configuration time."""


class UnsupportedInputError(PathMVError, ValueError):
    """Input shape or combination the operation deliberately does not handle."""


class ResourceLimitError(PathMVError):
    """A size cap protecting against accidentally huge exact computations."""


class LineageMismatchError(PathMVError, ValueError):
    """Two ensembles that must share a coupling lineage do not."""


class InternalConsistencyError(PathMVError, RuntimeError):
    """Internal bookkeeping violated an invariant; indicates a bug, not bad input."""


class AccumulatorSyncError(InternalConsistencyError):
    """A running integral was advanced out of lockstep with the time grid."""


class SimulationDivergedError(PathMVError, FloatingPointError):
    """A particle state became non-finite during time stepping."""

    def __init__(self, model_id, particle, step):
        self.model_id = model_id
        self.particle = int(particle)
        self.step = int(step)
        super().__init__(
            "non-finite state in model '%s' at particle %d, step %d"
            % (model_id, self.particle, self.step)
        )
