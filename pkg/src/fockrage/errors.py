"""Exception hierarchy.

The CLI maps these onto process exit codes: input/config problems exit
with 2, capacity problems with 3, numeric and accuracy failures with 4.
"""


class FockRageError(Exception):
    """Base class for all package errors."""

    exit_code = 1


class InputError(FockRageError, ValueError):
    exit_code = 2


class EmptySectorError(InputError):
    """Requested a fermionic sector with more particles than modes."""


class UnsupportedError(InputError):
    """Input is well formed but outside what an operation supports."""


class CapacityError(FockRageError):
    """A dense object would exceed the configured size budget."""

    exit_code = 3


class NumericError(FockRageError, ArithmeticError):
    exit_code = 4


class AccuracyError(NumericError):
    """An integrator error estimate exceeded its tolerance.

    ``suggested_step`` carries a step size expected to meet the tolerance.
    """

    def __init__(self, message, estimate=None, suggested_step=None):
        super().__init__(message)
        self.estimate = estimate
        self.suggested_step = suggested_step
