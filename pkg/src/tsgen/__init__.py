"""Generative modeling and evaluation for multivariate time series.

The package learns a fixed-dimension latent representation of variable
length, possibly incomplete sequences with an autoencoder, models that
latent space adversarially, and scores the synthesized output for
fidelity and downstream utility.
"""

from .errors import (
    BundleError,
    CalibrationWarning,
    ConfigError,
    DataError,
    EvalError,
    FitError,
    SchemaError,
    TrainingError,
    TsgenError,
    VocabError,
    WindowError,
)
from .instances import (
    LagMatrix,
    RawSeries,
    TimeSeriesInstance,
    carry_forward,
    carry_last_observations,
    compute_time_lags,
    extract_windows,
    lag_matrix,
)
from .schema import (
    Dataset,
    EncodingLayout,
    FeatureDef,
    SchemaDescriptor,
    append_length_feature,
    decode_length,
    fit_schema,
    inverse_transform,
    transform,
)
from .seeding import stage_seed

__version__ = "0.1.0"

__all__ = [
    "BundleError",
    "CalibrationWarning",
    "ConfigError",
    "DataError",
    "Dataset",
    "EncodingLayout",
    "EvalError",
    "FeatureDef",
    "FitError",
    "LagMatrix",
    "RawSeries",
    "SchemaDescriptor",
    "SchemaError",
    "TimeSeriesInstance",
    "TrainingError",
    "TsgenError",
    "VocabError",
    "WindowError",
    "append_length_feature",
    "carry_forward",
    "carry_last_observations",
    "compute_time_lags",
    "decode_length",
    "extract_windows",
    "fit_schema",
    "inverse_transform",
    "lag_matrix",
    "stage_seed",
    "transform",
]
