"""Exception types shared across the package.

The CLI maps :class:`ConfigError` to exit code 2 and :class:`DataError`
to exit code 3.
"""


class ConfigError(ValueError):
    """Invalid configuration (bad keys, empty design list, bad grid...)."""


class DataError(ValueError):
    """Malformed or unusable input data."""


class RankError(DataError):
    """A matrix expected to have rank r is numerically rank deficient."""
