"""Exception types shared across the pipeline.

The CLI maps these onto exit codes: ConfigError -> 1 (usage),
DataError -> 2, ProtocolError -> 3.
"""


class RpharError(Exception):
    """Base class for all library errors."""


class ConfigError(RpharError):
    """Invalid configuration value or malformed config file."""


class DataError(RpharError):
    """Unreadable, malformed, or out-of-range input data."""


class ParseError(DataError):
    """Malformed token in a data file; message carries file and line."""


class LengthError(RpharError, ValueError):
    """Input sequence too short for the requested operation."""


class ProtocolError(RpharError):
    """Evaluation protocol violated (mismatched splits, class lists, ...)."""
