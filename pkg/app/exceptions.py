from typing import Optional


class QKDError(Exception):
    """Base class for every error raised by the simulator."""


class ParameterError(QKDError, ValueError):
    """A precondition on protocol parameters or inputs does not hold."""


class DimensionMismatchError(ParameterError):
    """Operands of a GF(2) operation have incompatible shapes."""


class ExhaustiveLimitError(ParameterError):
    """The matrix has more rows than exhaustive weight verification allows."""

    def __init__(self, rows: int, limit: int):
        self.rows = rows
        self.limit = limit
        super().__init__(
            f"Exhaustive weight verification is limited to {limit} rows, got {rows}; "
            f"use a smaller m or a probabilistic screening tool outside this package"
        )


class RankDeficientError(ParameterError):
    """The matrix rows are linearly dependent."""


class MatrixSearchExhaustedError(QKDError):
    """No acceptable privacy-amplification matrix was found within the budget."""

    def __init__(self, trials: int, best_weight: int, target: int):
        self.trials = trials
        self.best_weight = best_weight
        self.target = target
        super().__init__(
            f"No matrix with minimum combination weight >= {target} after {trials} "
            f"trials (best weight found: {best_weight})"
        )


class PadExhaustedError(QKDError):
    """The shared one-time pad has too few unused bits left."""

    def __init__(self, consumed: int, requested: int, pad_length: int):
        self.consumed = consumed
        self.requested = requested
        self.pad_length = pad_length
        super().__init__(
            f"One-time pad exhausted: {consumed} of {pad_length} bits used, "
            f"{requested} more requested"
        )


class ProtocolFault(QKDError):
    """A protocol step was invoked in a state where it cannot proceed."""


class ConfigurationError(QKDError):
    """A run configuration could not be read or validated."""

    def __init__(self, message: str, path: Optional[str] = None):
        self.path = path
        super().__init__(f"{path}: {message}" if path else message)
