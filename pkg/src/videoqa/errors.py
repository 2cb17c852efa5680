"""Exception types shared across the package."""


class VideoQAError(Exception):
    """Base class for package errors."""


class DimensionError(VideoQAError, ValueError):
    """Operands have incompatible or unsupported shapes."""


class ContractError(VideoQAError, RuntimeError):
    """An operation was used outside its contract."""


class DataError(VideoQAError, ValueError):
    """A dataset file or instance violates the schema."""


class ConfigError(VideoQAError, ValueError):
    """A configuration value is missing, unknown, or out of range."""


class TrainingDiverged(VideoQAError, RuntimeError):
    """Training produced a non-finite loss."""
