"""Exception hierarchy.

Usage problems derive from :class:`UsageError` (CLI exit code 2), input
problems from :class:`InputError` (exit code 3) and numerical
failures from :class:`NumericalError` (exit code 4).
"""


class QndError(Exception):
    """Base class for all package errors."""


class InputError(QndError, ValueError):
    pass


class NumericalError(QndError, ArithmeticError):
    pass


class NotHermitian(InputError):
    pass


class InvalidState(InputError):
    pass


class InvalidDistribution(InputError):
    pass


class LengthMismatch(InputError):
    pass


class DimensionMismatch(InputError):
    pass


class IncompleteKraus(InputError):
    """Kraus operators do not resolve the identity."""


class Degenerate(InputError):
    """A Kraus operator is identically zero."""


class MissingBasisLabel(InputError):
    pass


class DimensionTooLarge(InputError):
    pass


class EmptyCounts(InputError):
    pass


class MissingBasisCounts(InputError):
    pass


class WindowOutOfRange(InputError):
    pass


class StepTooLarge(InputError):
    """The configured time step violates the startup stability bound."""


class NoConvergence(NumericalError):
    pass


class GridTooCoarse(NumericalError):
    pass


class StepUnstable(NumericalError):
    pass


class UsageError(QndError):
    """Malformed command line or configuration (CLI exit code 2)."""


class ParseError(UsageError):
    def __init__(self, key: str, message: str):
        super().__init__(f"{key}: {message}")
        self.key = key
