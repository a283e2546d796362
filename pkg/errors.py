"""Exception hierarchy for the geolocation pipeline."""


class GeolocError(Exception):
    """Base class for every error raised by the pipeline."""


class OutOfGridError(GeolocError, ValueError):
    """A coordinate falls outside the grid footprint."""


class PreconditionError(GeolocError, ValueError):
    """An operation was called with arguments violating its contract."""


class ConfigurationError(GeolocError):
    """Invalid configuration value, or inputs that do not fit together."""


class DataError(GeolocError):
    """Unreadable, corrupt or schema-violating input file."""
