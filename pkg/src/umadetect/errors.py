"""Exception types shared across the package."""


class UmaDetectError(Exception):
    """Base class for all package errors."""


class DimensionMismatchError(UmaDetectError, ValueError):
    """Operands have incompatible shapes."""


class ParameterError(UmaDetectError, ValueError):
    """A scalar, flag, or configuration value violates its contract."""


class NumericalError(UmaDetectError, RuntimeError):
    """A numerical routine failed or produced out-of-contract output."""

    def __init__(self, message, *, residual=None):
        super().__init__(message)
        self.residual = residual


class DivergenceError(NumericalError):
    """A solver iterate became non-finite.

    Carries the name of the offending update and whatever diagnostics were
    collected before the blow-up.
    """

    def __init__(self, message, *, step=None, diagnostics=None):
        super().__init__(message)
        self.step = step
        self.diagnostics = diagnostics


class StateError(UmaDetectError, RuntimeError):
    """Operation requested in a state that does not support it."""


class GenerationError(UmaDetectError, RuntimeError):
    """Synthetic dataset or attack generation could not satisfy its constraints."""


class RatingFormatError(UmaDetectError, ValueError):
    """Rating file malformed beyond the tolerated fraction of lines."""


class RatingRangeError(UmaDetectError, ValueError):
    """A rating fell outside the declared scale after centering."""


class CheckpointFormatError(UmaDetectError, ValueError):
    """Checkpoint magic, version, or layout not understood."""


class CheckpointIntegrityError(UmaDetectError, ValueError):
    """Checkpoint bytes fail checksum or length validation."""
