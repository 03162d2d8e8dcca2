"""Exception hierarchy with stable CLI exit codes."""


class FluxNVError(Exception):
    """Base class for errors raised by the package."""

    exit_code = 1


class ConfigError(FluxNVError, ValueError):
    exit_code = 2


class NumericalError(FluxNVError, RuntimeError):
    exit_code = 3


class TraceDriftError(NumericalError):
    """Raised when an integration step changes tr(rho) by more than the guard allows."""


class FitError(NumericalError):
    pass


class NoAvoidedCrossingError(NumericalError):
    pass


class CalibrationError(NumericalError):
    pass


class OutputError(FluxNVError, OSError):
    exit_code = 4
