"""Bayesian model selection for generalized additive models.

Natural cubic spline bases with one column per knot, Laplace-approximated
marginal likelihoods under mixtures of g-priors, and knot-selection MCMC for
logistic, Poisson and Gaussian additive regression.
"""

from .gauss import fit_gauss, log_marginal_gauss_tcch, sample_gauss_g
from .glm import Family, FamilyKind, FitError, FitState, fit_mle, pseudo_r2
from .harness import RunConfig, generate_dataset, parse_config, rmse_and_coverage, synth_f
from .knots import KnotPriorConfig, Strategy, log_prior
from .marginal import ModelCache, bf_curve, log_bayes_factor, log_marginal_fixed_g, log_marginal_tcch
from .samplers import (
    ChainContext,
    PosteriorDraws,
    effective_sample_size,
    posterior_functional,
    run_chain,
    run_chains,
    sample_g,
)
from .specfun import log_appell_f1, log_hyp1f1, log_hyp2f1, log_phi1
from .splines import BasisMatrix, KnotState, build_basis, insert_knot, remove_knot
from .tcch import GPriorFamily, PriorKind, TcchParams, tcch_log_pdf, tcch_moment, tcch_sample_exact, tcch_sample_slice

__all__ = [
    "fit_gauss",
    "log_marginal_gauss_tcch",
    "sample_gauss_g",
    "Family",
    "FamilyKind",
    "FitError",
    "FitState",
    "fit_mle",
    "pseudo_r2",
    "RunConfig",
    "generate_dataset",
    "parse_config",
    "rmse_and_coverage",
    "synth_f",
    "KnotPriorConfig",
    "Strategy",
    "log_prior",
    "ModelCache",
    "bf_curve",
    "log_bayes_factor",
    "log_marginal_fixed_g",
    "log_marginal_tcch",
    "ChainContext",
    "PosteriorDraws",
    "effective_sample_size",
    "posterior_functional",
    "run_chain",
    "run_chains",
    "sample_g",
    "log_appell_f1",
    "log_hyp1f1",
    "log_hyp2f1",
    "log_phi1",
    "BasisMatrix",
    "KnotState",
    "build_basis",
    "insert_knot",
    "remove_knot",
    "GPriorFamily",
    "PriorKind",
    "TcchParams",
    "tcch_log_pdf",
    "tcch_moment",
    "tcch_sample_exact",
    "tcch_sample_slice",
]

__version__ = "0.1.0"
