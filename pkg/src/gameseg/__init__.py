"""Graphical-lasso segmentation of energy social-game telemetry."""

__version__ = "0.1.0"

from .dataset import (
    AcademicCalendar,
    Dataset,
    FeatureMatrix,
    SynthConfig,
    derive_flags,
    generate_synthetic,
    load_csv,
    standardize,
    write_csv,
)
from .glasso import (
    cv_select_lambda,
    fit_graph,
    lambda_path,
    lasso_cd,
    pearson_matrix,
    soft_threshold,
)
from .clustering import elbow_scan, minibatch_kmeans, select_k, silhouette_score
from .supervised import assign_players, build_segments, representative_player
from .causality import causality_table, f_tail, granger_test, ols
from .similarity import matrix_pearson, rv_coefficient, transfer_labels

__all__ = [
    "AcademicCalendar",
    "Dataset",
    "FeatureMatrix",
    "SynthConfig",
    "assign_players",
    "build_segments",
    "causality_table",
    "cv_select_lambda",
    "derive_flags",
    "elbow_scan",
    "f_tail",
    "fit_graph",
    "generate_synthetic",
    "granger_test",
    "lambda_path",
    "lasso_cd",
    "load_csv",
    "matrix_pearson",
    "minibatch_kmeans",
    "ols",
    "pearson_matrix",
    "representative_player",
    "rv_coefficient",
    "select_k",
    "silhouette_score",
    "soft_threshold",
    "standardize",
    "transfer_labels",
    "write_csv",
]
