"""Exception hierarchy shared across the package."""


class IpwSurvError(Exception):
    """Base class for all package errors."""


class DatasetError(IpwSurvError, ValueError):
    pass


class AlignmentError(IpwSurvError, ValueError):
    """Vectors that must be index-aligned have different lengths."""


class ConfigError(IpwSurvError, ValueError):
    pass


class DivergenceError(IpwSurvError, FloatingPointError):
    """Training produced a non-finite loss or gradient."""


class UndefinedMetricError(IpwSurvError, ValueError):
    """A metric or estimate has no defined value for the given inputs."""
