"""Ordinary Kriging of probability measures on the real line.

Measures are handled through their quantile functions, where the
2-Wasserstein distance becomes an L2 distance and Kriging predictors are
linear combinations of observed curves.
"""

__version__ = "0.1.0"

from .crossval import (  # noqa: E402
    CvReport,
    GammaTilde,
    estimate_scale,
    gamma_tilde,
    grid_search_cv,
    loo_mse_naive,
    loo_mse_virtual,
    loo_residuals_virtual,
)
from .datasets import make_gaussian_measures  # noqa: E402
from .estimators import EmpiricalQuantileEncoder, OrdinaryKriging, QuantileKriging  # noqa: E402
from .exceptions import (  # noqa: E402
    ConvergenceError,
    IllConditionedError,
    NumericalError,
    ValidationError,
    WkrigeError,
)
from .gp_mle import CovParams, log_likelihood, mle_fit, profile_mean, sample_gp  # noqa: E402
from .kriging import (  # noqa: E402
    GammaMatrix,
    KrigingSolution,
    SiteSet,
    assemble_gamma,
    predict_quantile,
    predict_scalar,
    solve_weights,
    solve_weights_nonneg,
)
from .measures import (  # noqa: E402
    QuantileCurve,
    QuantileGrid,
    RawCurve,
    barycenter,
    empirical_quantile,
    gaussian_quantile_curve,
    l2_inner,
    linear_combination,
    monotone_rearrange,
    wasserstein2,
)
from .metrics import MetricsRecord, evaluate_metrics  # noqa: E402
from .variogram import (  # noqa: E402
    BinSpec,
    EmpiricalVariogram,
    MaternParams,
    empirical_variogram,
    fit_least_squares,
    make_bins,
    matern,
    pairwise_squared_w2,
)
