"""Exception hierarchy shared by all thermidor modules."""


class ThermidorError(Exception):
    """Base class for every error raised by this package."""

    exit_code = 1


class InvalidArgumentError(ThermidorError, ValueError):
    """An argument violates a documented precondition."""

    exit_code = 2


class ConfigError(InvalidArgumentError):
    """A configuration file could not be parsed or validated."""

    exit_code = 2


class SolverError(ThermidorError):
    """A linear solve did not reach the requested tolerance.

    Attributes
    ----------
    residual : float
        Achieved relative residual.
    tag : str
        Name of the failing system (e.g. ``"theta"`` or ``"u_2"``).
    """

    exit_code = 3

    def __init__(self, message, residual=float("nan"), tag=""):
        super().__init__(message)
        self.residual = residual
        self.tag = tag


class DivergenceError(SolverError):
    """The discrete state became non-finite or blew up."""


class StabilityError(DivergenceError):
    """An explicit integrator blew up; the step is too large."""


class AccuracyError(ThermidorError):
    """A quadrature did not reach its requested accuracy.

    Attributes
    ----------
    estimate : float
        Achieved error estimate.
    """

    exit_code = 4

    def __init__(self, message, estimate=float("nan")):
        super().__init__(message)
        self.estimate = estimate
