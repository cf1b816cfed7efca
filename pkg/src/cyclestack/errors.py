"""Exception hierarchy shared across the package."""


class CycleStackError(Exception):
    """Base class for all package errors."""


class ShapeError(CycleStackError, ValueError):
    """Tensor shapes are inconsistent with the requested operation."""


class NumericError(CycleStackError, ArithmeticError):
    """A computation produced NaN/Inf or was fed non-finite values."""


class TapeError(CycleStackError, RuntimeError):
    """Misuse of the autodiff tape (e.g. backward on an unrecorded tensor)."""


class DataError(CycleStackError, ValueError):
    """Input data violates a documented domain contract."""


class ConfigError(CycleStackError, ValueError):
    """A run configuration is malformed or inconsistent."""


class CheckpointError(CycleStackError, IOError):
    """A checkpoint directory is missing, corrupt, or inconsistent."""


class ManifestError(CheckpointError):
    """The checkpoint manifest is unreadable or structurally invalid."""


class WeightShapeError(CheckpointError):
    """A stored parameter does not match the shape the pipeline expects."""


class TruncatedWeightsError(CheckpointError):
    """The weight blob is shorter or longer than the manifest promises."""


class TrainingError(CycleStackError, RuntimeError):
    """Training aborted (diverged loss, missing prerequisite stage, ...)."""
