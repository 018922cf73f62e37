"""Full versus partialled estimation of linear IV models.

Partialling exogenous covariates out of the outcome, the endogenous
regressors and the instruments leaves 2SLS (and OLS, exactly identified IV
and two-step optimal GMM) coefficients unchanged. This package computes both
forms, their sandwich covariances, and reports where they agree.
"""

from . import covariance, engine, estimators, linalg, model, simulate
from ._kernels import BACKEND
from .covariance import CovSpec, VcovResult, sandwich_full, sandwich_partial
from .engine import ComparisonReport, compare, convergence_sweep, limitation_demo
from .errors import NumericalError, ValidationError, YFWLError
from .estimators import FitResult, fit
from .model import Dataset, ModelSpec, ValidatedDesign, ingest_csv, make_design, validate

__version__ = "0.1.0"

__all__ = [
    "BACKEND",
    "ComparisonReport",
    "CovSpec",
    "Dataset",
    "FitResult",
    "ModelSpec",
    "NumericalError",
    "ValidatedDesign",
    "ValidationError",
    "VcovResult",
    "YFWLError",
    "compare",
    "convergence_sweep",
    "covariance",
    "engine",
    "estimators",
    "fit",
    "ingest_csv",
    "limitation_demo",
    "linalg",
    "make_design",
    "model",
    "sandwich_full",
    "sandwich_partial",
    "simulate",
    "validate",
]
