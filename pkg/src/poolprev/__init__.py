"""Exact Bayesian prevalence estimation from individual and pooled binary tests."""

from .errors import (
    InfeasibleFitError,
    PoolPrevError,
    PrecisionError,
    TermLimitError,
    ValidationError,
)
from .imperfect import (
    TestAccuracy,
    build,
    build_posterior_imperfect,
    g_coefficient,
    likelihood_individual,
    likelihood_pooled,
)
from .numerics import (
    PrecisionContext,
    beta_function,
    binomial_coefficient,
    regularized_incomplete_beta,
)
from .posterior import (
    Design,
    Observation,
    PosteriorMixture,
    PriorBeta,
    beta_distribution,
    build_posterior,
    cdf,
    credible_interval,
    fit_beta_mom,
    mean,
    pdf,
    pool_positive_prob,
    quantile,
    raw_moment,
    variance,
)

__version__ = "0.1.0"
