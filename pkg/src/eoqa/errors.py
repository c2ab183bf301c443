"""Shared exception types."""


class EoqaError(Exception):
    """Base class for package errors."""


class DecodeError(EoqaError):
    """Raster could not be decoded (bad file, depth or channel count)."""


class ParameterError(EoqaError, ValueError):
    """An argument is outside its documented domain."""


class SizeError(EoqaError):
    """An image is too small (or would become degenerate) for the operation."""


class DimensionMismatch(EoqaError):
    """Two images that must share shape/range do not."""


class EdgeNotFound(EoqaError):
    """No usable straight edge was detected in the image."""


class MeasurementUnavailable(EoqaError):
    """The measurement is undefined on this input (e.g. no homogeneous patches)."""


class CheckpointError(EoqaError):
    """Checkpoint unreadable, corrupt, or of an unsupported version."""


class GridMismatch(EoqaError):
    """Model was trained on a different parameter grid than requested."""


class TrainingDiverged(EoqaError):
    """Non-finite loss or gradients during training."""
