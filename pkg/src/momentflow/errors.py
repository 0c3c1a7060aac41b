"""Shared exception types."""


class NumericalError(RuntimeError):
    """A solver failed to converge or produced an invalid state."""


class ConfigError(ValueError):
    """A run manifest is malformed; the message names the offending field."""
