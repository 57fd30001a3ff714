"""Exception types raised across the package."""


class RoadFairError(Exception):
    pass


class ConfigurationError(RoadFairError, ValueError):
    """Invalid network/data/experiment configuration."""


class UsageError(RoadFairError, ValueError):
    """Arguments inconsistent with each other (shapes, lengths, missing groups)."""


class NumericError(RoadFairError, FloatingPointError):
    """Non-finite values reached an input, a gradient or a parameter."""


class ParseError(RoadFairError, ValueError):
    pass


class UnsupportedError(RoadFairError, ValueError):
    pass


class UndefinedMetricError(RoadFairError, ValueError):
    """A fairness metric needs a group (or a (y, s) cell) that is empty."""
