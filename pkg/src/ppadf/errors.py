"""Exception hierarchy shared by all modules."""


class PPADFError(Exception):
    """Base class for package errors."""


class ValidationError(PPADFError, ValueError):
    """Raised when a model violates one or more invariants.

    ``errors`` holds the complete list of violations, not just the first.
    """

    def __init__(self, errors):
        self.errors = list(errors)
        super().__init__("; ".join(self.errors))


class ConfigError(PPADFError, ValueError):
    """Malformed configuration or input file."""


class NumericalError(PPADFError, ArithmeticError):
    """A numerical failure during simulation or filtering."""


class SPDError(NumericalError):
    """A covariance lost positive definiteness.

    Carries the grid step at which it happened and the offending belief
    (mean, covariance) so callers can report it.
    """

    def __init__(self, message, step=None, mean=None, cov=None):
        super().__init__(message)
        self.step = step
        self.mean = mean
        self.cov = cov


class WeightUnderflowError(NumericalError):
    """All particle weights vanished."""

    def __init__(self, message, step=None):
        super().__init__(message)
        self.step = step
