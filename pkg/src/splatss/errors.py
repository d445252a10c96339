"""Exception types raised across the package."""


class SplatError(Exception):
    """Base class for all package errors."""


class DimensionError(SplatError, ValueError):
    """Array extents or channel counts do not line up."""


class NumericError(SplatError, ValueError):
    """Non-finite values where finite ones are required."""


class StateError(SplatError, RuntimeError):
    """An object was used in the wrong lifecycle state."""


class ContractError(SplatError, ValueError):
    """A documented precondition was violated by the caller."""


class ConfigurationError(SplatError, ValueError):
    """An invalid combination of settings."""


class FormatError(SplatError, ValueError):
    """A file does not follow the expected layout."""


class DataError(SplatError, ValueError):
    """A file is well formed but holds unusable values."""


class RangeError(SplatError, ValueError):
    """A scalar argument is outside its admissible interval."""
