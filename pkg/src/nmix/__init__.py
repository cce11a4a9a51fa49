"""Link prediction for bipartite count networks under imperfect detection.

The model: latent interaction counts are Poisson with a low-rank
nonnegative rate matrix, and observations are binomial thinnings of those
counts with per-pair detection probabilities linear in features.  The
estimator alternates an exact ADMM solve for the detection weights with
multiplicative updates for the two factor blocks.
"""

from .alpha_solver import AdmmDiagnostics, solve_alpha_admm
from .baselines import mc_cf, poisson_nmf, truncated_svd
from .core import (
    CountDataset,
    DetectionModel,
    FactorModel,
    FeatureSet,
    FitConfig,
    LatentCounts,
    collapsed_loglik,
    sample_network,
    total_objective,
    truncated_mixture_sum,
)
from .cv import run_cv
from .fitter import FitResult, NumericalError, fit, gradient_check, impute_missing
from .io import ModelFile, ParseError, load_counts, load_features
from .metrics import (
    EvalReport,
    alpha_mse,
    auprc,
    auroc,
    factor_mse,
    kfold_split,
    rrmse,
)
from .synthgen import SynthConfig, generate_instance

__version__ = "0.1.0"

__all__ = [
    "AdmmDiagnostics",
    "CountDataset",
    "DetectionModel",
    "EvalReport",
    "FactorModel",
    "FeatureSet",
    "FitConfig",
    "FitResult",
    "LatentCounts",
    "ModelFile",
    "NumericalError",
    "ParseError",
    "SynthConfig",
    "alpha_mse",
    "auprc",
    "auroc",
    "collapsed_loglik",
    "factor_mse",
    "fit",
    "generate_instance",
    "gradient_check",
    "impute_missing",
    "kfold_split",
    "load_counts",
    "load_features",
    "mc_cf",
    "poisson_nmf",
    "rrmse",
    "run_cv",
    "sample_network",
    "solve_alpha_admm",
    "total_objective",
    "truncated_mixture_sum",
    "truncated_svd",
]
