"""Exception types shared across the pipeline stages."""


class RocketPHMError(Exception):
    """Base class for all pipeline errors."""


class ParseError(RocketPHMError):
    """A data file line could not be parsed (carries the line number)."""


class IntegrityError(RocketPHMError):
    """Parsed data violates a structural invariant (e.g. cycle gaps)."""


class ConfigError(RocketPHMError):
    """Invalid configuration, CLI arguments, or incompatible shapes."""


class SegmentationError(RocketPHMError):
    """Health-stage segmentation is impossible (degenerate slope spread)."""


class FitError(RocketPHMError):
    """A classifier cannot be fitted on the given data."""
