"""Exception hierarchy.

Two families matter to callers: :class:`InputError` (bad model, bad
arguments, unsupported request) and :class:`NumericalError` (a computation
that could not be completed to tolerance).  The CLI maps them to exit codes
2 and 3 respectively.
"""

from __future__ import annotations


class DiffboundError(Exception):
    """Base class for all package errors."""


class InputError(DiffboundError, ValueError):
    """Invalid input: malformed expression, model or argument."""


class NumericalError(DiffboundError, ArithmeticError):
    """A numerical procedure failed or left its domain."""


class ExprSyntaxError(InputError):
    def __init__(self, message: str, position: int):
        super().__init__(f"{message} at position {position}")
        self.position = position


class UnknownFunctionError(ExprSyntaxError):
    pass


class UnboundParameterError(InputError):
    pass


class ExprDomainError(NumericalError):
    """Expression evaluated outside its natural domain (log of a negative, ...)."""


class SingularCoefficientError(NumericalError):
    pass


class OutOfRangeError(InputError):
    pass


class UnsupportedIntervalError(InputError):
    pass


class UnsupportedOperationError(InputError):
    pass
