"""Random convolutional kernel transforms for turbofan health-status assessment."""

__version__ = "0.1.0"

FORMAT_VERSION = 1

from .errors import (  # noqa: F401
    ConfigError,
    FitError,
    IntegrityError,
    ParseError,
    RocketPHMError,
    SegmentationError,
)

__all__ = [
    "FORMAT_VERSION",
    "ConfigError",
    "FitError",
    "IntegrityError",
    "ParseError",
    "RocketPHMError",
    "SegmentationError",
    "__version__",
]
