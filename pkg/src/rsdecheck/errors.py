"""Exception hierarchy shared by every module."""


class RsdeError(Exception):
    """Base class for all errors raised by rsdecheck."""


class ConfigurationError(RsdeError, ValueError):
    """Bad parameters, mismatched shapes or an invalid run configuration."""


class ModelError(RsdeError, ValueError):
    """A model object violates a structural assumption (e.g. |nu({a})| >= 1)."""


class SimulationBlowup(RsdeError, ArithmeticError):
    """A trajectory left the finite range; ``step`` is the offending step index."""

    def __init__(self, message, step=None):
        super().__init__(message)
        self.step = step


class StatisticsError(RsdeError, ValueError):
    """Not enough data for the requested estimator."""
