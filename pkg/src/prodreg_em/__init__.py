"""Maximum-likelihood product-term regression with missing predictors and outcome.

The hybrid EM (``Method.HYB``) computes E-steps analytically whenever the
missing predictors stay conditionally Gaussian and falls back to midpoint
quadrature otherwise; ``Method.NI`` uses quadrature for every incomplete case.
"""

__version__ = "0.1.0"

from .bootstrap import BootstrapResult, bootstrap_ci, fit_with_bootstrap
from .em import EmConfig, FitResult, fit, observed_loglik, start_values
from .estep import (CasePlan, ExpectedStats, GridConfig, Method, SumStats, accumulate,
                    estep_complete, estep_mdp1, estep_mdp2, estep_mdp3)
from .gaussian import (GaussianParams, MultiIndex, condition, isserlis_oracle,
                       mc_moment_oracle, product_moment)
from .model import ModelSpec, Theta, design_matrix, design_vector, validate_theta
from .mstep import update_beta, update_mu, update_sigma2, update_Sigma
from .patterns import MDP, CasePattern, classify

__all__ = [
    "BootstrapResult", "CasePattern", "CasePlan", "EmConfig", "ExpectedStats", "FitResult",
    "GaussianParams", "GridConfig", "MDP", "Method", "ModelSpec", "MultiIndex", "SumStats",
    "Theta", "accumulate", "bootstrap_ci", "classify", "condition", "design_matrix",
    "design_vector", "estep_complete", "estep_mdp1", "estep_mdp2", "estep_mdp3", "fit",
    "fit_with_bootstrap", "isserlis_oracle", "mc_moment_oracle", "observed_loglik",
    "product_moment", "start_values", "update_beta", "update_mu", "update_sigma2",
    "update_Sigma", "validate_theta",
]
