"""Exception types shared across the toolkit."""


class SpliceLocError(Exception):
    """Base class for all toolkit errors."""


class ConfigError(SpliceLocError):
    """Raised when a config file cannot be parsed or holds invalid values."""


class DataError(SpliceLocError):
    """Raised when an input file (WAV, manifest, score file, submission) is malformed."""
