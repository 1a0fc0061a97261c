class AuprefError(Exception):
    """Base class for errors raised by this package."""


class ConfigError(AuprefError, ValueError):
    """Invalid thresholds, grids or run configuration."""


class DataError(AuprefError, ValueError):
    """Malformed, inconsistent or insufficient input data."""


class GeometryError(DataError):
    """A head-pose ratio is undefined for the given distances."""


class FeatureUndefinedError(DataError):
    """No defined moving-window mean exists for a clip."""
