"""Gaussian-process baseline for scalar fields: likelihood, profiled fitting, sampling."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import scipy.linalg as spl

from .exceptions import NumericalError, ValidationError
from .kriging import SiteSet
from .variogram import MaternParams, matern, parse_nu

__all__ = [
    "JITTER",
    "CovParams",
    "GpSample",
    "MleFit",
    "covariance_matrix",
    "profile_mean",
    "log_likelihood",
    "mle_fit",
    "sample_gp",
]

JITTER = 1e-10


class CovParams(MaternParams):
    """Matérn parameters read as a covariance ``K(h) = K(0) - gamma(h)``."""

    def covariance(self, h):
        h = np.asarray(h, dtype=float)
        out = self.sigma2 + self.nugget - matern(h, self)
        return float(out) if np.ndim(out) == 0 else out

    @classmethod
    def from_semivariogram(cls, params: MaternParams) -> "CovParams":
        return cls(params.sigma2, params.length_scale, params.nu, params.nugget)


def covariance_matrix(sites: SiteSet, params: MaternParams, jitter: float = JITTER) -> np.ndarray:
    """Covariance of the process at ``sites`` with ``jitter * sigma2`` on the diagonal."""
    k = (params.sigma2 + params.nugget) - matern(sites.distances(), params)
    k = np.atleast_2d(np.asarray(k, dtype=float))
    k[np.diag_indices_from(k)] = params.sigma2 + params.nugget + jitter * params.sigma2
    return k


def _cholesky(cov):
    try:
        return spl.cho_factor(cov, lower=True, check_finite=False)
    except (spl.LinAlgError, ValueError) as exc:
        raise NumericalError("covariance not SPD") from exc


def _check_cholesky(c):
    if not np.all(np.diag(c[0]) > 0) or not np.all(np.isfinite(c[0])):
        raise NumericalError("covariance not SPD")


def profile_mean(cov_matrix, values) -> float:
    """Generalized-least-squares mean ``1^T K^-1 y / 1^T K^-1 1``."""
    cov = np.asarray(cov_matrix, dtype=float)
    y = np.asarray(values, dtype=float).ravel()
    if cov.shape != (y.size, y.size):
        raise ValidationError(f"covariance must be {y.size}x{y.size}, got {cov.shape}")
    c = _cholesky(cov)
    _check_cholesky(c)
    rhs = np.column_stack([y, np.ones_like(y)])
    sol = spl.cho_solve(c, rhs, check_finite=False)
    return float(sol[:, 0].sum() / sol[:, 1].sum())


def _loglik_from_cholesky(c, r: np.ndarray) -> float:
    n = r.size
    alpha = spl.cho_solve(c, r, check_finite=False)
    logdet = 2.0 * np.sum(np.log(np.diag(c[0])))
    return float(-0.5 * r @ alpha - 0.5 * n * math.log(2.0 * math.pi) - 0.5 * logdet)


def log_likelihood(params: MaternParams, mean: float, sites: SiteSet, values,
                   jitter: float = JITTER) -> float:
    """Gaussian log-likelihood of ``values`` with constant ``mean``."""
    y = np.asarray(values, dtype=float).ravel()
    if y.size != sites.n:
        raise ValidationError(f"expected {sites.n} values, got {y.size}")
    c = _cholesky(covariance_matrix(sites, params, jitter))
    _check_cholesky(c)
    return _loglik_from_cholesky(c, y - mean)


@dataclass(frozen=True)
class MleFit:
    params: CovParams
    mean: float
    log_likelihood: float
    degenerate: bool
    length_scale_grid: np.ndarray = field(repr=False)
    profile: np.ndarray = field(repr=False)
    sigma2_profile: np.ndarray = field(repr=False)


def mle_fit(sites: SiteSet, values, nu0, length_scale_grid=None,
            jitter: float = JITTER) -> MleFit:
    """Maximum-likelihood ``(mean, sigma2, length_scale)`` at fixed smoothness.

    For each length scale the mean and the sill are profiled out in closed
    form; the length scale with the largest profiled likelihood wins (lowest
    index on ties).  Constant data drives every profiled sill to zero: the
    fit is then flagged ``degenerate`` and carries the smallest positive sill.
    """
    nu = parse_nu(nu0)
    y = np.asarray(values, dtype=float).ravel()
    n = y.size
    if n != sites.n:
        raise ValidationError(f"expected {sites.n} values, got {n}")
    if n < 2:
        raise ValidationError("maximum likelihood needs at least 2 observations")
    if length_scale_grid is None:
        from .crossval import default_length_scale_grid
        grid = default_length_scale_grid(sites)
    else:
        grid = np.asarray(length_scale_grid, dtype=float).ravel()
    if grid.size == 0 or np.any(grid <= 0):
        raise ValidationError("length-scale grid must be non-empty and positive")

    profile = np.full(grid.size, -np.inf)
    sig = np.full(grid.size, np.nan)
    means = np.full(grid.size, np.nan)
    logdets = np.full(grid.size, np.nan)
    for k, ls in enumerate(grid):
        unit = MaternParams(1.0, float(ls), nu)
        try:
            c = _cholesky(covariance_matrix(sites, unit, jitter))
            _check_cholesky(c)
        except NumericalError:
            continue
        sol = spl.cho_solve(c, np.column_stack([y, np.ones(n)]), check_finite=False)
        m = sol[:, 0].sum() / sol[:, 1].sum()
        r = y - m
        s2 = float(r @ spl.cho_solve(c, r, check_finite=False)) / n
        means[k], sig[k] = m, s2
        logdets[k] = 2.0 * np.sum(np.log(np.diag(c[0])))
    ok = np.isfinite(sig)
    if not np.any(ok):
        raise NumericalError("covariance not SPD for every length-scale candidate")
    floor = 1e-20 * (float(np.mean(y * y)) + np.finfo(float).tiny)
    degenerate = bool(np.all(sig[ok] <= floor))
    if degenerate:
        best = int(np.nonzero(ok)[0][0])
        s2 = np.finfo(float).tiny
        loglik = math.inf
    else:
        valid = ok & (sig > floor)
        profile[valid] = (-0.5 * n * (math.log(2.0 * math.pi) + np.log(sig[valid]) + 1.0)
                          - 0.5 * logdets[valid])
        best = int(np.argmax(profile))
        s2 = float(sig[best])
        loglik = float(profile[best])
    params = CovParams(s2, float(grid[best]), nu)
    return MleFit(params, float(means[best]), loglik, degenerate, grid, profile, sig)


@dataclass(frozen=True)
class GpSample:
    sites: SiteSet
    values: np.ndarray = field(repr=False)
    seed: int


def sample_gp(sites: SiteSet, params: MaternParams, mean: float = 0.0, seed: int = 0,
              jitter: float = JITTER) -> GpSample:
    """Draw one realization of the Gaussian process at ``sites``.

    Deterministic in ``seed``: ``mean + L z`` with ``L`` the Cholesky factor of
    the covariance and ``z`` from ``numpy.random.default_rng(seed)``.
    """
    c = _cholesky(covariance_matrix(sites, params, jitter))
    _check_cholesky(c)
    lower = np.tril(c[0])
    z = np.random.default_rng(seed).standard_normal(sites.n)
    values = mean + lower @ z
    values.flags.writeable = False
    return GpSample(sites, values, seed)
