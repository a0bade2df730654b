"""Exception taxonomy. Every error maps to a CLI exit code."""


class TsgenError(Exception):
    """Base class for all package errors."""

    exit_code = 1


class ConfigError(TsgenError):
    """Bad or inconsistent configuration."""

    exit_code = 2


class BundleError(ConfigError):
    """Model bundle missing, incomplete, or incompatible."""


class DataError(TsgenError):
    """Malformed or inconsistent input data."""

    exit_code = 3


class FitError(DataError):
    """Schema fitting failed (e.g. empty training input)."""


class SchemaError(DataError):
    """Data does not conform to the governing schema."""


class VocabError(SchemaError):
    """Category value outside the fitted vocabulary."""


class WindowError(DataError):
    """Series too short for the requested window length."""


class TrainingError(TsgenError):
    """Optimization diverged or failed mid-run."""

    exit_code = 4

    def __init__(self, message, checkpoint=None):
        super().__init__(message)
        self.checkpoint = checkpoint


class EvalError(TsgenError):
    """Evaluation could not be computed on the given inputs."""

    exit_code = 5


class CalibrationWarning(UserWarning):
    """Mask-threshold calibration hit a degenerate head."""
