"""Exception hierarchy shared across the package.

The CLI maps these onto exit codes: configuration and validation problems
exit 2, file problems exit 3, numerical divergence exits 4.
"""


class LesionVizError(Exception):
    """Base class for all package errors."""

    category = "error"


class ShapeError(LesionVizError, ValueError):
    category = "shape"


class ConfigError(LesionVizError, ValueError):
    category = "config"


class DataIOError(LesionVizError, OSError):
    category = "io"


class PlacementError(LesionVizError, ValueError):
    """A lesion does not fit inside the phantom mask at the requested spot."""

    category = "placement"


class DivergenceError(LesionVizError, ArithmeticError):
    category = "numerical"


class UndefinedMetricError(LesionVizError, ValueError):
    category = "metric"


class CheckpointError(DataIOError):
    category = "checkpoint"


class CheckpointTruncatedError(CheckpointError):
    category = "checkpoint-truncated"


class CheckpointCorruptError(CheckpointError):
    category = "checkpoint-corrupt"


class CheckpointVersionError(CheckpointError):
    category = "checkpoint-version"
