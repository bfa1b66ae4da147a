"""Exception hierarchy shared by all modules."""

from __future__ import annotations


class MadelungError(Exception):
    """Base class for package errors."""


class DimensionError(MadelungError, ValueError):
    pass


class DegenerateDensityError(MadelungError, ValueError):
    pass


class ContractViolation(MadelungError, ValueError):
    pass


class IncompleteHistoryError(MadelungError, ValueError):
    pass


class DomainError(MadelungError, ValueError):
    pass


class DegenerateStateError(MadelungError, ValueError):
    pass


class NumericalDivergenceError(MadelungError, ArithmeticError):
    def __init__(self, message: str, iteration: int | None = None):
        super().__init__(message)
        self.iteration = iteration


class UsageError(MadelungError, ValueError):
    pass
