"""Exception types shared across the pipeline."""


class HrcalError(Exception):
    """Base class for all errors raised by this package."""


class ParseError(HrcalError):
    """A file did not conform to its schema."""

    def __init__(self, path, line, message):
        self.path = str(path)
        self.line = line
        super().__init__(f"{path}:{line}: {message}")


class ValidationError(HrcalError):
    """Loaded data violated an invariant (ordering, range, coverage)."""


class ConfigError(HrcalError):
    """A configuration value is missing, malformed, or out of range."""


class IoError(HrcalError):
    """A file could not be read or written."""


class InsufficientDataError(HrcalError):
    """Too few samples to perform the requested operation."""


class ShapeError(HrcalError):
    """Array dimensions do not match."""


class DomainError(HrcalError):
    """An argument lies outside the mathematical domain of the operation."""


class DegenerateFeatureError(HrcalError):
    """A feature column is constant and cannot be tested."""


class DegenerateTargetError(HrcalError):
    """Training targets span a zero range."""


class ConvergenceError(HrcalError):
    """An iterative solver hit its iteration budget.

    Carries the best iterate found so far in ``model``.
    """

    def __init__(self, message, model=None):
        super().__init__(message)
        self.model = model


class TrainingError(HrcalError):
    """Model training diverged or the problem is numerically singular."""


class PipelineError(HrcalError):
    """A pipeline stage could not produce its artifact."""

    def __init__(self, stage, message):
        self.stage = stage
        super().__init__(f"[{stage}] {message}")
