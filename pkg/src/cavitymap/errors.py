"""Exception hierarchy shared across the package.

Plain argument misuse raises the built-in ``ValueError``/``TypeError``;
the classes below mark failures that callers (and the command line tool)
are expected to handle as distinct outcomes.
"""


class CavitymapError(Exception):
    """Base class for all package-specific failures."""

    exit_code = 1


class ConfigurationError(CavitymapError):
    """Bad configuration key, type, or out-of-range value."""

    exit_code = 2


class IntegrationFailure(CavitymapError):
    """The ODE integrator gave up (e.g. step-size underflow)."""

    exit_code = 3

    def __init__(self, message, time=None):
        if time is not None:
            message = f"{message} (at t = {time:.6e} s)"
        super().__init__(message)
        self.time = time


class AccuracyFailure(CavitymapError):
    """A solution was produced but violates its accuracy contract."""

    exit_code = 3


class CalibrationFailure(CavitymapError):
    """No admissible mirror-loss rate reproduces the calibration target."""

    exit_code = 4


class DegenerateRatioError(CavitymapError):
    """A transfer-probability ratio has a vanishing denominator."""


class DegenerateFitError(CavitymapError):
    """A least-squares fit returned an unusable model (e.g. offset <= 0)."""


class ScheduleWarning(UserWarning):
    """Suspicious but non-fatal pulse-schedule configuration."""
