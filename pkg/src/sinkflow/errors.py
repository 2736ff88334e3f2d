"""Exception hierarchy shared across the package."""


class SinkflowError(Exception):
    """Base class for all package errors."""


class DimensionError(SinkflowError, ValueError):
    """Array shapes do not agree."""


class InvalidInputError(SinkflowError, ValueError):
    """Input values violate a precondition (NaN, negative mass, bad label...)."""


class ConfigurationError(SinkflowError, ValueError):
    """Inconsistent configuration or parameters."""


class DataFormatError(SinkflowError, ValueError):
    """A data file could not be parsed or is incomplete."""


class TrainingError(SinkflowError, RuntimeError):
    """Training diverged (non-finite loss or parameters)."""
