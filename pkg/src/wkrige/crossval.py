"""Leave-one-out cross-validation for quantile Kriging.

The virtual formulas give every leave-one-out residual from a single matrix
``Gt = G^-1 - G^-1 1 (1^T G^-1 1)^-1 1^T G^-1``:

    Q_i - Qhat_i^(-i) = sum_j (Gt_ij / Gt_ii) Q_j

and the residual variance under a unit-sill model is ``-1 / Gt_ii``.  The
naive route refits the Kriging system on every ``n - 1`` subset and is kept
as an independent check and for benchmarking.
"""

from __future__ import annotations

import logging
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
import scipy.linalg as spl
from scipy.linalg import lapack
from scipy.spatial.distance import pdist

from .exceptions import NumericalError, ValidationError
from .kriging import GammaMatrix, SiteSet, assemble_gamma
from .measures import QuantileCurve, RawCurve, stack_values
from .variogram import NU_VALUES, MaternParams, parse_nu

__all__ = [
    "GammaTilde",
    "Candidate",
    "CvReport",
    "gamma_tilde",
    "loo_residuals_virtual",
    "loo_mse_virtual",
    "loo_mse_naive",
    "loo_residuals_naive",
    "estimate_scale",
    "default_length_scale_grid",
    "candidate_grid",
    "evaluate_candidates",
    "grid_search_cv",
    "resolve_threads",
]

logger = logging.getLogger(__name__)


def resolve_threads(threads: Optional[int] = None) -> int:
    """Worker count from the argument, else ``WKRIGE_THREADS``, else 1."""
    if threads is None:
        env = os.environ.get("WKRIGE_THREADS")
        threads = int(env) if env else 1
    if threads < 1:
        raise ValidationError(f"thread count must be positive, got {threads}")
    return int(threads)


@dataclass(frozen=True, eq=False)
class GammaTilde:
    """Constraint-projected inverse of a semivariogram matrix.

    ``scale`` is the sill the matrix was built with; residual variances are
    reported relative to it.
    """

    matrix: np.ndarray = field(repr=False)
    scale: float

    @property
    def n(self) -> int:
        return self.matrix.shape[0]

    @property
    def diagonal(self) -> np.ndarray:
        return np.diag(self.matrix)

    def loo_variances(self) -> np.ndarray:
        """``-1 / Gt_ii``: predicted squared LOO residual norms for this sill."""
        return -1.0 / self.diagonal

    def residual_operator(self) -> np.ndarray:
        """Row-normalized matrix mapping observations to LOO residuals."""
        return self.matrix / self.diagonal[:, None]


def gamma_tilde(gm: GammaMatrix) -> GammaTilde:
    inv_unit = gm.inverse * gm.scale
    u = inv_unit.sum(axis=1)
    s = float(u.sum())
    if abs(s) < 1e-14:
        raise NumericalError("degenerate constraint normalization")
    gt = inv_unit - np.outer(u, u) / s
    gt = 0.5 * (gt + gt.T)
    if not np.all(np.diag(gt) < 0.0):
        raise NumericalError("invalid LOO variance (ill-posed system)")
    gt /= gm.scale
    gt.flags.writeable = False
    return GammaTilde(gt, gm.scale)


def _values_of(curves) -> tuple:
    if isinstance(curves, np.ndarray):
        return None, np.atleast_2d(curves)
    return stack_values(curves)


def loo_residuals_virtual(gt: GammaTilde, curves: Sequence[QuantileCurve]) -> list[RawCurve]:
    grid, values = stack_values(curves)
    if values.shape[0] != gt.n:
        raise ValidationError(f"dimension mismatch: {values.shape[0]} curves for a {gt.n}x{gt.n} system")
    res = gt.residual_operator() @ values
    return [RawCurve(grid, r) for r in res]


def _mse_from_residuals(res: np.ndarray) -> float:
    # mean over sites of the midpoint-rule squared L2 norm
    return float(np.mean(np.mean(res * res, axis=1)))


def loo_mse_virtual(gt: GammaTilde, curves) -> float:
    """Mean squared LOO error in the 2-Wasserstein metric, by the virtual formulas.

    ``curves`` may be a sequence of curves or an ``(n, M)`` array of values.
    """
    _, values = _values_of(curves)
    if values.shape[0] != gt.n:
        raise ValidationError(f"dimension mismatch: {values.shape[0]} curves for a {gt.n}x{gt.n} system")
    return _mse_from_residuals(gt.residual_operator() @ values)


def _drop(a: np.ndarray, i: int, out: np.ndarray) -> np.ndarray:
    # a with row and column i removed, written into out by block copies
    out[:i, :i] = a[:i, :i]
    out[:i, i:] = a[:i, i + 1:]
    out[i:, :i] = a[i + 1:, :i]
    out[i:, i:] = a[i + 1:, i + 1:]
    return out


def _refit_weights(cov: np.ndarray, kstar: np.ndarray, unit_gamma: np.ndarray,
                   gstar: np.ndarray) -> np.ndarray:
    """Ordinary Kriging weights on a reduced site set.

    Uses the covariance form ``K l = k* + a 1`` with ``K = c 11^T - Gamma``
    (Cholesky), falling back to the bordered semivariogram system when ``K``
    is numerically indefinite.
    """
    m = cov.shape[0]
    rhs = np.empty((m, 2))
    rhs[:, 0] = kstar
    rhs[:, 1] = 1.0
    chol, info = lapack.dpotrf(cov, lower=1, clean=0, overwrite_a=1)
    if info == 0:
        sol, info = lapack.dpotrs(chol, rhs, lower=1)
    if info == 0:
        a, b = sol[:, 0], sol[:, 1]
        return a + (1.0 - a.sum()) / b.sum() * b
    bordered = np.ones((m + 1, m + 1))
    bordered[:m, :m] = unit_gamma
    bordered[m, m] = 0.0
    x = spl.solve(bordered, np.append(gstar, 1.0), check_finite=False)
    return x[:m]


def _naive_residuals(gm: GammaMatrix, values: np.ndarray) -> np.ndarray:
    n = gm.n
    if n < 2:
        raise ValidationError("leave-one-out needs at least 2 sites")
    res = np.empty_like(values)
    g_unit = gm.matrix / gm.scale
    cov_full = 1.0 - g_unit
    cov = np.empty((n - 1, n - 1))
    sub = np.empty((n - 1, n - 1))
    for i in range(n):
        keep = np.r_[0:i, i + 1:n]
        _drop(cov_full, i, cov)
        w = _refit_weights(cov, cov_full[keep, i], _drop(g_unit, i, sub), g_unit[keep, i])
        res[i] = values[i] - w @ values[keep]
    return res


def loo_residuals_naive(sites: SiteSet, curves, params: MaternParams,
                        gm: Optional[GammaMatrix] = None) -> np.ndarray:
    """LOO residuals ``Q_i - Qhat_i^(-i)`` by refitting on each ``n - 1`` subset.

    Uses the raw linear predictor (no rearrangement), returned as ``(n, M)``.
    """
    _, values = _values_of(curves)
    gm = assemble_gamma(sites, params) if gm is None else gm
    return _naive_residuals(gm, values)


def loo_mse_naive(sites: SiteSet, curves, params: MaternParams,
                  gm: Optional[GammaMatrix] = None) -> float:
    return _mse_from_residuals(loo_residuals_naive(sites, curves, params, gm))


def estimate_scale(gt: GammaTilde, curves) -> float:
    """Sill estimate: mean ratio of squared LOO residual norms to their unit-sill variances.

    ``gt`` is normally built at unit sill; for any other sill the estimate is
    rescaled so the result does not depend on it.
    """
    _, values = _values_of(curves)
    if np.any(gt.diagonal >= 0.0):
        raise NumericalError("invalid LOO variance (ill-posed system)")
    res = gt.residual_operator() @ values
    norms = np.mean(res * res, axis=1)
    unit_var = gt.loo_variances() / gt.scale
    return float(np.mean(norms / unit_var))


def default_length_scale_grid(sites: SiteSet, size: int = 100) -> np.ndarray:
    """``size`` log-spaced length scales from 0.05x to 2x the largest site distance."""
    if sites.n < 2:
        raise ValidationError("at least two sites are required")
    dmax = float(pdist(sites.scaled).max())
    return np.geomspace(0.05 * dmax, 2.0 * dmax, size)


def candidate_grid(length_scales, nu_set=NU_VALUES) -> list[tuple[float, float]]:
    """Candidates ordered by smoothness, then length scale, both ascending."""
    ls = np.sort(np.asarray(length_scales, dtype=float).ravel())
    nus = sorted({parse_nu(nu) for nu in nu_set})
    if ls.size == 0 or not nus:
        raise ValidationError("length-scale grid and smoothness set must be non-empty")
    if np.any(ls <= 0):
        raise ValidationError("length scales must be positive")
    return [(float(l), nu) for nu in nus for l in ls]


def _evaluate_one(sites, values, length_scale, nu, method):
    params = MaternParams(1.0, length_scale, nu)
    try:
        gm = assemble_gamma(sites, params)
        if method == "virtual":
            return loo_mse_virtual(gamma_tilde(gm), values), None
        return _mse_from_residuals(_naive_residuals(gm, values)), None
    except NumericalError as exc:
        return math.nan, str(exc)


def evaluate_candidates(sites: SiteSet, curves, candidates, method: str = "virtual",
                        threads: Optional[int] = None):
    """LOO MSE at unit sill for every ``(length_scale, nu)`` candidate.

    Returns ``(mse, diagnostics)``; failed candidates carry ``nan`` and a
    message.  Results are in candidate order whatever the thread count.
    """
    if method not in ("virtual", "naive"):
        raise ValidationError(f"unknown LOO method {method!r}")
    _, values = _values_of(curves)
    if values.shape[0] != sites.n:
        raise ValidationError(f"expected {sites.n} curves, got {values.shape[0]}")
    workers = resolve_threads(threads)
    args = [(sites, values, l, nu, method) for l, nu in candidates]
    if workers == 1:
        out = [_evaluate_one(*a) for a in args]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            out = list(pool.map(lambda a: _evaluate_one(*a), args))
    mse = np.array([o[0] for o in out])
    return mse, [o[1] for o in out]


@dataclass(frozen=True)
class Candidate:
    length_scale: float
    nu: float
    mse_loo: float
    diagnostic: Optional[str] = None


@dataclass(frozen=True)
class CvReport:
    candidates: list
    best: int
    residual_norms: np.ndarray = field(repr=False)
    sigma2_hat: float

    @property
    def params(self) -> MaternParams:
        c = self.candidates[self.best]
        return MaternParams(self.sigma2_hat, c.length_scale, c.nu)

    def rows(self):
        for i, c in enumerate(self.candidates):
            yield i, c.length_scale, c.nu, c.mse_loo, c.diagnostic or ""


def grid_search_cv(sites: SiteSet, curves, length_scale_grid=None, nu_set=NU_VALUES,
                   threads: Optional[int] = None) -> CvReport:
    """Select ``(length_scale, nu)`` by virtual LOO and estimate the sill.

    Every candidate is evaluated at unit sill, since LOO predictions do not
    depend on it.  Ill-conditioned candidates are skipped with a diagnostic.
    Ties go to the lowest candidate index.
    """
    _, values = _values_of(curves)
    if values.shape[0] != sites.n:
        raise ValidationError(f"expected {sites.n} curves, got {values.shape[0]}")
    if sites.n < 2:
        raise ValidationError("cross-validation needs at least 2 sites")
    if np.all(values == values[0]):
        raise ValidationError("zero variance data")
    grid = default_length_scale_grid(sites) if length_scale_grid is None else length_scale_grid
    cands = candidate_grid(grid, nu_set)
    mse, diag = evaluate_candidates(sites, values, cands, "virtual", threads)
    ok = np.isfinite(mse)
    if not np.any(ok):
        raise NumericalError("no admissible candidate")
    skipped = int((~ok).sum())
    if skipped:
        logger.info("skipped %d of %d ill-conditioned candidates", skipped, len(cands))
    masked = np.where(ok, mse, np.inf)
    lowest = masked.min()
    best = int(np.nonzero(masked <= lowest + 1e-15 * (1.0 + abs(lowest)))[0][0])

    l_best, nu_best = cands[best]
    gt = gamma_tilde(assemble_gamma(sites, MaternParams(1.0, l_best, nu_best)))
    res = gt.residual_operator() @ values
    sigma2_hat = estimate_scale(gt, values)
    if not sigma2_hat > 0:
        raise ValidationError("zero variance data")
    candidates = [Candidate(l, nu, float(m), d) for (l, nu), m, d in zip(cands, mse, diag)]
    return CvReport(candidates, best, np.mean(res * res, axis=1), sigma2_hat)
