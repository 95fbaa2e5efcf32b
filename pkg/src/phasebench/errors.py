"""Exception hierarchy shared by all phasebench modules."""


class PhasebenchError(Exception):
    """Base class for all package-specific errors."""


class DimensionError(PhasebenchError, ValueError):
    """Grid shapes of the operands do not agree."""


class DomainError(PhasebenchError, ValueError):
    """An argument is outside the mathematical domain of the operation."""


class ConfigError(PhasebenchError, ValueError):
    """Invalid experiment configuration (file or programmatic)."""


class CalibrationError(PhasebenchError, RuntimeError):
    """Fringe calibration could not locate a usable carrier peak."""


class StagnationError(PhasebenchError, RuntimeError):
    """Line search failed to find a decrease within its shrink budget.

    Carries the partial reconstruction in ``report`` so callers can keep
    the best iterate found so far.
    """

    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report
