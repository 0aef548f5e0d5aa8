"""Exception types shared across the library.

The CLI maps these onto process exit codes: ConfigError -> 2,
DivergenceError -> 3, OSError -> 4.
"""


class FedDecompError(Exception):
    """Base class for all library errors."""


class ShapeError(FedDecompError, ValueError):
    """Array has the wrong shape, dimension, or symmetry for an operation."""


class EmptyInputError(FedDecompError, ValueError):
    """An operation received an empty matrix, batch, or dataset."""


class DegenerateAxisError(FedDecompError, ValueError):
    """Projection axis has zero norm."""


class LabelError(FedDecompError, ValueError):
    """A class label is outside [0, num_classes)."""


class DegenerateRoundError(FedDecompError, RuntimeError):
    """Every client uploaded a zero gradient; no principal basis exists."""


class DivergenceError(FedDecompError, RuntimeError):
    """Local training produced a non-finite loss."""

    def __init__(self, client_id: int, message: str = ""):
        self.client_id = client_id
        super().__init__(message or f"client {client_id} diverged (non-finite loss)")


class ConfigError(FedDecompError, ValueError):
    """A run or aggregation configuration is invalid."""


class InternalConsistencyError(FedDecompError, RuntimeError):
    """The loss-decomposition identity failed beyond tolerance.

    This identity is algebraically exact, so a violation indicates an
    evaluation bug rather than numerical noise.
    """


class CsvFormatError(FedDecompError, ValueError):
    """A CSV file is malformed; carries the offending line number when known."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
