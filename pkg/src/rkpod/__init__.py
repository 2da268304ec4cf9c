"""Sparse k-means for partially observed data.

k-POD clustering with feature-wise l0 or group-lasso penalties, fitted by
an impute-then-cluster majorization loop, plus tuning, simulation and
evaluation helpers.
"""

from .kmeans_core import FitResult, kpod_fit, kpod_loss, lloyd
from .maskedmat import MaskedMatrix, from_nan, project
from .methods import FitOptions, fit_method
from .regkpod import PenaltySpec, prop21_check, reg_kpod_fit
from .tuning import TuningResult, bic, instability, select_lambda

__all__ = [
    "FitOptions",
    "FitResult",
    "MaskedMatrix",
    "PenaltySpec",
    "TuningResult",
    "bic",
    "fit_method",
    "from_nan",
    "instability",
    "kpod_fit",
    "kpod_loss",
    "lloyd",
    "project",
    "prop21_check",
    "reg_kpod_fit",
    "select_lambda",
]
