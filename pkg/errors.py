"""
Exception hierarchy for risforge.

Configuration problems (bad scenario files, impossible grids, missing panel
configs) and numeric problems (singular covariances, non-finite matrices) are
kept apart so the command line can map them to distinct exit codes.
"""


class RisforgeError(Exception):
    """Base class for every error raised by risforge."""


class ConfigurationError(RisforgeError, ValueError):
    """Invalid scenario, geometry, grid or configuration input."""


class FieldOfViewError(ConfigurationError):
    """Angle grid leaves the panel field of view (M > M'+1 or N > N'+1)."""


class OversamplingError(ConfigurationError):
    """Codebook holds more entries than there are distinct phase configurations."""


class SearchSpaceError(ConfigurationError):
    """Exhaustive search requested over a space that is too large."""


class DimensionError(ConfigurationError):
    """Matrix or configuration shapes do not agree."""


class NumericError(RisforgeError, ArithmeticError):
    """Numeric failure while evaluating channels or metrics."""


class SingularityError(NumericError):
    """Noise covariance is numerically singular."""


class UndefinedMetricError(NumericError):
    """Metric is undefined for the given matrix (e.g. all-zero channel)."""
