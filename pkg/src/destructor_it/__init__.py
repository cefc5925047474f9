"""Density-destructive Gaussianization flows and the information-theoretic
estimators built on them (total correlation, mutual information, entropy,
negentropy)."""

__version__ = "0.1.0"

from .data import DataMatrix, load_csv, save_csv, split, summary
from .flow import (
    FitConfig,
    GaussianizationFlow,
    Head,
    StopReason,
    delta_t_direct,
    fit,
    forward,
    inverse,
    log_density,
)
from .itmeasures import (
    ITReport,
    Quantity,
    mutual_information,
    multivariate_entropy,
    negentropy,
    total_correlation,
)
from .modelfile import load_model, save_model
from .rotation import RotationKind

__all__ = [
    "DataMatrix", "load_csv", "save_csv", "split", "summary",
    "FitConfig", "GaussianizationFlow", "Head", "StopReason", "RotationKind",
    "fit", "forward", "inverse", "log_density", "delta_t_direct",
    "ITReport", "Quantity", "total_correlation", "mutual_information",
    "multivariate_entropy", "negentropy", "load_model", "save_model",
]
