"""Exception hierarchy.

Input-side problems derive from :class:`InputError` (CLI exit code 1),
numerical failures from :class:`NumericalError` (CLI exit code 2).
"""


class DynBetaError(Exception):
    """Base class for all package errors."""


class InputError(DynBetaError):
    """Malformed or inconsistent user input."""


class ShapeError(InputError, ValueError):
    """Array dimensions do not match what an operation expects."""


class ConfigError(InputError, ValueError):
    """Invalid configuration or hyperparameter."""


class InputTooShortError(InputError, ValueError):
    """A recording is shorter than one analysis segment."""


class DegenerateInputError(InputError, ValueError):
    """Input carries no usable information (all-zero spectrum, single label, ...)."""


class StateError(DynBetaError, RuntimeError):
    """An operation was called before the state it needs exists."""


class NumericalError(DynBetaError, ArithmeticError):
    """Non-finite values or out-of-domain arguments in a numerical routine."""


class TrainingDiverged(NumericalError):
    """Training produced a non-finite loss.

    ``last_state`` holds the last parameters whose loss was finite.
    """

    def __init__(self, message, last_state=None, epoch=None):
        super().__init__(message)
        self.last_state = last_state
        self.epoch = epoch
