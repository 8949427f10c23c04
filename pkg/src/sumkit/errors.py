"""Exception types shared across the package.

Config/usage problems map to CLI exit code 2, everything else to 1.
"""


class SumkitError(Exception):
    """Base class for all errors raised by this package."""


class ShapeError(SumkitError):
    """Operands with incompatible shapes."""


class ConfigError(SumkitError):
    """Invalid configuration value or unknown config key."""


class UsageError(SumkitError):
    """API called in a way its contract forbids (wrong mode, empty input, ...)."""


class FormatError(SumkitError):
    """File does not match the expected container format (bad magic, bad header)."""


class FeatureIOError(SumkitError):
    """I/O-level failure while reading or writing a container file (truncation, size mismatch)."""


class ValidationError(SumkitError):
    """Well-formed file whose contents violate an invariant (non-finite values, bad lengths)."""


class NumericError(SumkitError):
    """Non-finite values produced during computation."""
