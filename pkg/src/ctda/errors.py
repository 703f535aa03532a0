"""
Exception hierarchy for the contrastive/domain-adaptation lab.

Every exception carries the process exit code the CLI should use when it
escapes a command.
"""


class CtdaError(Exception):
    """Base class for all lab errors."""

    exit_code: int = 1


class ConfigError(CtdaError):
    """Invalid experiment or environment configuration."""

    exit_code = 2


class VerificationError(CtdaError):
    """One or more verification checks failed."""

    exit_code = 3

    def __init__(self, message: str, report: dict | None = None):
        super().__init__(message)
        self.report = report


class DatasetIOError(CtdaError):
    """Dataset, log or checkpoint could not be read or written."""

    exit_code = 4


class GeneratorError(CtdaError, ValueError):
    """Invalid synthetic generator input (bad parameters, degenerate field)."""


class BatchError(CtdaError, ValueError):
    """An embedding batch violates the invariants an operation relies on."""


class EstimatorUndefinedError(CtdaError, ValueError):
    """A discrepancy estimator is undefined on the given batch (empty cell)."""


class TrainingDivergedError(CtdaError):
    """The training loss became non-finite."""
