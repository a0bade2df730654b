"""Fidelity, utility, and missing-pattern metrics for synthetic time series."""

from .downstream import (
    DownstreamSpec,
    class_labels,
    default_grid,
    lr_feature_matrix,
    rnn_grid,
    run_downstream,
)
from .patterns import (
    constant_missing_features,
    heatmap_agreement,
    missing_rate_vectors,
    pca_project,
    pearson_matrix,
    pearson_missing_heatmap,
)
from .report import EvalReport, MetricSummary, evaluate_pair, render_report
from .scores import discriminative_score, predictive_score

__all__ = [
    "DownstreamSpec",
    "EvalReport",
    "MetricSummary",
    "class_labels",
    "constant_missing_features",
    "default_grid",
    "discriminative_score",
    "evaluate_pair",
    "heatmap_agreement",
    "lr_feature_matrix",
    "missing_rate_vectors",
    "pca_project",
    "pearson_matrix",
    "pearson_missing_heatmap",
    "predictive_score",
    "render_report",
    "rnn_grid",
    "run_downstream",
]
