"""Exception hierarchy shared by all modules."""


class SumHessError(Exception):
    """Base class for errors raised by this package."""


class InvalidArgument(SumHessError, ValueError):
    """An argument violates a documented precondition."""


class DomainError(SumHessError, ValueError):
    """A value lies outside the set where an operation is defined.

    Raised for cone violations in transformed derivatives, barrier queries
    outside the boundary strip, and similar situations.
    """


class NumericalError(SumHessError, ArithmeticError):
    """An iterative or linear-algebra kernel failed."""


class ValidationError(SumHessError):
    """A problem description or configuration failed validation."""
