"""Exception types shared across the package."""


class DomklError(Exception):
    """Base class for every error raised by this package."""


class ConfigurationError(DomklError, ValueError):
    """Invalid hyperparameter, dimension, or experiment setting.

    ``key`` names the offending config path when one applies.
    """

    def __init__(self, message, key=None):
        self.key = key
        if key is not None:
            message = f"{key}: {message}"
        super().__init__(message)


class InputError(DomklError, ValueError):
    """Shape or dimension mismatch in a call argument."""


class ProtocolError(DomklError, RuntimeError):
    """A learner was handed neighbor data that does not match its neighborhood."""


class NumericError(DomklError, ArithmeticError):
    """Non-finite value where a finite one is required."""


class IngestionError(DomklError, OSError):
    """Dataset could not be read or parsed."""


class ConvergenceError(DomklError, RuntimeError):
    """Iterative solver ran out of budget."""

    def __init__(self, message, grad_norm):
        self.grad_norm = grad_norm
        super().__init__(f"{message} (final gradient norm {grad_norm:.3e})")


class InvariantError(DomklError, AssertionError):
    """A runtime self-check (weight simplex, dual conservation) failed."""
