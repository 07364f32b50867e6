"""DCT-based decontamination of uplink channel estimates for multi-cell ULA systems."""
from .errors import (
    ConfigurationError, DimensionError, InvalidCovarianceError, InvalidParameterError,
    SpatialDctError, UndefinedMetricError,
)

__version__ = "0.1.0"

__all__ = [
    "ConfigurationError", "DimensionError", "InvalidCovarianceError", "InvalidParameterError",
    "SpatialDctError", "UndefinedMetricError", "__version__",
]
