"""Shared exception types."""


class DataError(ValueError):
    """Malformed or unusable input data."""


class ConfigError(ValueError):
    """Invalid configuration value."""
