class AdaptDPError(Exception):
    """Base class for all package errors."""


class InputError(AdaptDPError, ValueError):
    """Malformed numerical input (non-finite entries, unsorted spectra, ...)."""


class ConfigurationError(AdaptDPError, ValueError):
    """Incompatible dimensions or settings."""


class ParameterError(AdaptDPError, ValueError):
    """A regularisation or kernel parameter outside its admissible set."""


class DimensionRangeError(AdaptDPError, ValueError):
    """Requested index or argument outside the available range."""


class ConsistencyError(AdaptDPError, RuntimeError):
    """An internal cross-check failed."""
