"""Exception hierarchy shared across the workbench."""


class VesselBenchError(Exception):
    """Base class for all errors raised by this package."""


class FormatError(VesselBenchError):
    """File violates the supported on-disk format; message names the field."""


class UnsupportedFormatError(FormatError):
    """File is recognizable but outside the supported subset."""


class ValidationError(VesselBenchError):
    """Data violates an invariant (non-finite voxels, non-binary labels, ...)."""


class ParameterError(VesselBenchError):
    """Caller passed an out-of-range or malformed argument."""


class BoundsError(ParameterError):
    """Index / coordinate outside the valid grid."""


class GeometryError(VesselBenchError):
    """Geometric construction impossible (radius too large, non-square plane)."""


class SamplingError(VesselBenchError):
    """Patch sampling cannot satisfy the requested class constraints."""


class ShapeError(VesselBenchError):
    """Array shapes are inconsistent; message lists both shapes."""


class StateError(VesselBenchError):
    """Operation invoked without the state it needs (e.g. missing forward cache)."""


class NumericError(VesselBenchError):
    """Non-finite values encountered where finite math is required."""


class TrainingError(VesselBenchError):
    """Training diverged; carries the epoch index in the message."""


class InferenceError(VesselBenchError):
    """Whole-volume inference impossible for the given volume/model pair."""


class ConfigError(VesselBenchError):
    """Configuration fields are inconsistent or unsatisfiable."""


class DegenerateInputError(VesselBenchError):
    """Input is degenerate for the operation (zero variance, all-zero diffs)."""


class InsufficientDataError(VesselBenchError):
    """Too few usable data points for the statistic."""


class MetricUndefinedError(VesselBenchError):
    """Metric has no defined value for this input (e.g. empty mask)."""
