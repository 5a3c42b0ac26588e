"""Shared exception types for configuration and input validation."""


class ConfigError(ValueError):
    """A configuration value or combination is invalid."""


class ValidationError(ValueError):
    """An input record or argument failed validation."""
