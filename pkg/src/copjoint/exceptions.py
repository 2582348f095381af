"""Exception hierarchy shared across the package."""


class CopjointError(Exception):
    """Base class for all package errors."""


class DomainError(CopjointError, ValueError):
    """An argument lies outside the domain an operation accepts."""


class ConsistencyError(CopjointError, ArithmeticError):
    """An internal invariant was violated (e.g. negative rectangle mass)."""


class NumericalError(CopjointError, ArithmeticError):
    """A computation produced non-finite values or failed to converge."""


class SchemaError(CopjointError, ValueError):
    """Input data or a parameter file does not match the expected schema."""


class TrainingError(NumericalError):
    """Training diverged; carries the last finite parameter vector."""

    def __init__(self, message, last_params=None, epoch=None):
        super().__init__(message)
        self.last_params = last_params
        self.epoch = epoch
