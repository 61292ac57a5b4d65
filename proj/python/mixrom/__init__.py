"""Python access to the mixrom simulator, surrogate models and feature analysis."""

from ._core import (
    InvalidArgument,
    IoError,
    NumericalError,
    SvrModel,
    feature_importance,
    feature_names,
    fit_exponent,
    kmeans,
    load_dataset,
    r2_score,
    run_sweep,
    simulate,
    svr_train,
)

__all__ = [
    "InvalidArgument",
    "IoError",
    "NumericalError",
    "SvrModel",
    "feature_importance",
    "feature_names",
    "fit_exponent",
    "kmeans",
    "load_dataset",
    "r2_score",
    "run_sweep",
    "simulate",
    "svr_train",
]
