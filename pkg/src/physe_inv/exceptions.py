"""Exception hierarchy shared by every physe_inv module.

The CLI maps each family to an exit code: configuration and contract errors
exit 1, data errors exit 2, numeric failures exit 3.
"""
from typing import Optional


class PhysEInvError(Exception):
    """Base class for all errors raised by physe_inv."""

    exit_code = 1


class ConfigError(PhysEInvError, ValueError):
    """Invalid configuration key or value."""

    exit_code = 1


class ContractError(PhysEInvError, ValueError):
    """A caller violated an operation's precondition."""

    exit_code = 1


class DimensionError(ContractError):
    """Tensor shapes do not conform to an operation's contract."""


class DataError(PhysEInvError, ValueError):
    """Input data is malformed or unusable."""

    exit_code = 2


class IngestionError(DataError):
    def __init__(self, message: str, line: Optional[int] = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class DegenerateSeriesError(DataError):
    """A series has zero variance on the training split."""


class UnattainableTargetError(DataError):
    """No grid pair reproduces the requested ice thickness."""


class NumericError(PhysEInvError, ArithmeticError):
    """Non-finite values or a numeric domain violation."""

    exit_code = 3


class DomainError(NumericError):
    """An operation was evaluated outside its mathematical domain."""


class DegenerateSimilarityError(DomainError):
    """Cosine similarity requested for a (near) zero-norm embedding."""


class SingularDenominatorError(NumericError):
    """Physical constants make a closed-form denominator vanish."""


class GradientCheckError(NumericError):
    def __init__(self, message: str, coordinate: Optional[int] = None):
        self.coordinate = coordinate
        super().__init__(message)


class TrainingDivergedError(NumericError):
    def __init__(self, message: str, checkpoint: Optional[str] = None):
        self.checkpoint = checkpoint
        super().__init__(message)
