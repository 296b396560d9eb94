"""Exception hierarchy shared across the package.

The CLI maps these onto process exit codes: usage/configuration problems
exit 2, data problems exit 3, numerical failures exit 4.
"""


class RflocError(Exception):
    """Base class for all package errors."""


class ConfigError(RflocError):
    """Invalid configuration value or incompatible array shapes."""


class UsageError(RflocError):
    """An operation was invoked in an unsupported way."""


class DataError(RflocError):
    """Problem with a dataset or a data file."""


class SchemaError(DataError):
    """A required CSV column is missing."""


class CsvParseError(DataError):
    """A CSV cell could not be parsed as a number."""


class ArtifactError(DataError):
    """Model artifact is missing, truncated, corrupted or has a wrong version."""


class NumericalError(RflocError):
    """A computation produced non-finite values."""
