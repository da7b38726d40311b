"""Exception hierarchy shared by all modules."""


class PesplitError(Exception):
    """Base class for library errors."""


class ConfigurationError(PesplitError, ValueError):
    """Invalid parameters or configuration values."""


class DomainError(PesplitError, ValueError):
    """A point or time lies outside the admissible domain."""


class ShapeError(PesplitError, ValueError):
    """Mismatched grids or array shapes."""


class ConstraintError(PesplitError, ValueError):
    """A field violates the zero vertical-mean constraint."""


class BlowUpError(PesplitError, RuntimeError):
    """Numerical explosion or a nonlinear solve that failed to converge."""

    def __init__(self, message, interval=None, step=None):
        super().__init__(message)
        self.interval = interval
        self.step = step


class CouplingError(PesplitError, ValueError):
    """Trajectories driven by different Brownian paths were compared."""


class StatisticsError(PesplitError, ValueError):
    """Too few samples for the requested statistic."""


class StabilityError(PesplitError, RuntimeError):
    """Too many trajectories blew up during a study."""
