"""Exception hierarchy shared by the package."""


class SpatialDctError(Exception):
    """Base class for all package errors."""


class InvalidParameterError(SpatialDctError, ValueError):
    pass


class InvalidCovarianceError(SpatialDctError, ValueError):
    pass


class DimensionError(SpatialDctError, ValueError):
    pass


class ConfigurationError(SpatialDctError, ValueError):
    """Raised for malformed scenarios; ``path`` names the offending field."""

    def __init__(self, message, path=None):
        self.path = path
        super().__init__(f"{path}: {message}" if path else message)


class UndefinedMetricError(SpatialDctError, ValueError):
    pass
