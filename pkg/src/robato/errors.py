"""Exception hierarchy shared across the package.

The CLI maps these onto process exit codes: configuration problems exit
with 2, data problems with 3, numerical failures with 4.
"""


class RobatoError(Exception):
    """Base class for all package errors."""


class ConfigError(RobatoError):
    """Invalid configuration: bad field values, unknown keys, bad enums."""


class DataError(RobatoError):
    """Invalid data: parse failures, non-finite values, degenerate inputs."""


class NumericError(RobatoError):
    """Numerical failure: degenerate designs, non-finite intermediate results."""
