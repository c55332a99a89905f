"""Exception types shared across the package."""


class ConfigError(ValueError):
    """Invalid dimensions, shapes, or configuration values."""


class NumericError(ArithmeticError):
    """Non-finite values or numerically singular inputs."""


class DataError(ValueError):
    """Malformed datasets, buffers, or serialized artifacts."""
