"""Matérn semivariograms, experimental semivariograms and least-squares fitting."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy.spatial.distance import pdist, squareform

from .exceptions import ValidationError
from .measures import QuantileCurve, stack_values

__all__ = [
    "NU_VALUES",
    "MaternParams",
    "BinSpec",
    "EmpiricalVariogram",
    "LeastSquaresFit",
    "matern",
    "unit_matern",
    "pairwise_squared_w2",
    "scalar_squared_differences",
    "make_bins",
    "empirical_variogram",
    "fit_least_squares",
    "parse_nu",
]

NU_VALUES = (0.5, 1.5, 2.5)


def parse_nu(nu) -> float:
    """Map ``"1/2"``, ``"3/2"``, ``"5/2"`` or the matching floats onto the allowed set."""
    try:
        if isinstance(nu, str) and "/" in nu:
            num, den = nu.split("/", 1)
            value = float(num) / float(den)
        else:
            value = float(nu)
    except (TypeError, ValueError, ZeroDivisionError):
        raise ValidationError(f"smoothness must be one of 1/2, 3/2, 5/2; got {nu!r}") from None
    for allowed in NU_VALUES:
        if abs(value - allowed) < 1e-12:
            return allowed
    raise ValidationError(f"smoothness must be one of 1/2, 3/2, 5/2; got {nu!r}")


@dataclass(frozen=True)
class MaternParams:
    """Matérn semivariogram parameters.

    ``nugget`` adds a jump of that height at every strictly positive lag.
    It defaults to zero, which is the pure Matérn model.
    """

    sigma2: float
    length_scale: float
    nu: float = 1.5
    nugget: float = 0.0

    def __post_init__(self):
        if not (np.isfinite(self.sigma2) and self.sigma2 > 0):
            raise ValidationError(f"sigma2 must be positive, got {self.sigma2!r}")
        if not (np.isfinite(self.length_scale) and self.length_scale > 0):
            raise ValidationError(f"length_scale must be positive, got {self.length_scale!r}")
        if not (np.isfinite(self.nugget) and self.nugget >= 0):
            raise ValidationError(f"nugget must be non-negative, got {self.nugget!r}")
        object.__setattr__(self, "nu", parse_nu(self.nu))
        object.__setattr__(self, "sigma2", float(self.sigma2))
        object.__setattr__(self, "length_scale", float(self.length_scale))

    def with_sigma2(self, sigma2: float) -> "MaternParams":
        return MaternParams(sigma2, self.length_scale, self.nu, self.nugget)

    def to_dict(self) -> dict:
        return {
            "sigma2": self.sigma2,
            "length_scale": self.length_scale,
            "nu": self.nu,
            "nugget": self.nugget,
        }


def unit_matern(h, length_scale: float, nu: float) -> np.ndarray:
    """Unit-sill Matérn semivariogram ``1 - rho(h)`` for half-integer ``nu``."""
    r = np.asarray(h, dtype=float) / length_scale
    if nu == 0.5:
        # -expm1 keeps full relative precision near the origin
        return -np.expm1(-r)
    if nu == 1.5:
        s = math.sqrt(3.0) * r
        return 1.0 - (1.0 + s) * np.exp(-s)
    if nu == 2.5:
        s = math.sqrt(5.0) * r
        return 1.0 - (1.0 + s + s * s / 3.0) * np.exp(-s)
    raise ValidationError(f"unsupported smoothness {nu!r}")


def matern(h, params: MaternParams):
    """Evaluate the Matérn semivariogram at lag(s) ``h``.

    Accepts a scalar or an array of non-negative lags and returns the same
    shape.  The value at ``h = 0`` is exactly zero.
    """
    arr = np.asarray(h, dtype=float)
    if np.any(arr < 0) or np.any(np.isnan(arr)):
        raise ValidationError("lag distance must be non-negative")
    out = params.sigma2 * unit_matern(arr, params.length_scale, params.nu)
    if params.nugget:
        out = out + np.where(arr > 0, params.nugget, 0.0)
    if out.ndim == 0:
        return float(out)
    return out


def pairwise_squared_w2(curves: Sequence[QuantileCurve]) -> np.ndarray:
    """Matrix of squared 2-Wasserstein distances between all pairs of curves."""
    if len(curves) < 2:
        raise ValidationError("at least two curves are required")
    grid, values = stack_values(curves)
    sq = squareform(pdist(values, "sqeuclidean")) / grid.size
    return sq


def scalar_squared_differences(values: Sequence[float]) -> np.ndarray:
    y = np.asarray(values, dtype=float).ravel()
    return (y[:, None] - y[None, :]) ** 2


@dataclass(frozen=True)
class BinSpec:
    """Distance bins ``[edges[b], edges[b+1])`` with their midpoints as lag centers."""

    edges: np.ndarray

    def __post_init__(self):
        edges = np.array(self.edges, dtype=float).ravel()
        if edges.size < 2:
            raise ValidationError("at least one bin (two edges) is required")
        if edges[0] < 0 or np.any(np.diff(edges) <= 0) or not np.all(np.isfinite(edges)):
            raise ValidationError("bin edges must be finite, non-negative and strictly increasing")
        edges.flags.writeable = False
        object.__setattr__(self, "edges", edges)

    @property
    def count(self) -> int:
        return self.edges.size - 1

    @property
    def max_distance(self) -> float:
        return float(self.edges[-1])

    @property
    def centers(self) -> np.ndarray:
        return 0.5 * (self.edges[:-1] + self.edges[1:])


def make_bins(count: int = 15, max_distance: Optional[float] = None,
              locations=None) -> BinSpec:
    """Equal-width bins over ``[0, max_distance)``.

    When ``max_distance`` is omitted it defaults to half the largest pairwise
    distance between ``locations``.
    """
    if int(count) != count or count < 1:
        raise ValidationError(f"bin count must be a positive integer, got {count!r}")
    if max_distance is None:
        if locations is None:
            raise ValidationError("either max_distance or locations is required")
        pts = np.asarray(locations, dtype=float)
        if pts.ndim == 1:
            pts = pts[:, None]
        if pts.shape[0] < 2:
            raise ValidationError("at least two locations are required")
        max_distance = 0.5 * float(pdist(pts).max())
    if not max_distance > 0:
        raise ValidationError("max_distance must be positive")
    return BinSpec(np.linspace(0.0, max_distance, int(count) + 1))


@dataclass(frozen=True)
class EmpiricalVariogram:
    """Non-empty bins of an experimental semivariogram."""

    lags: np.ndarray
    gamma: np.ndarray
    pair_counts: np.ndarray

    def __len__(self):
        return self.lags.size

    def rows(self):
        for h, g, c in zip(self.lags, self.gamma, self.pair_counts):
            yield float(h), float(g), int(c)


def empirical_variogram(locations, sqdist, bins: BinSpec) -> EmpiricalVariogram:
    """Binned experimental semivariogram.

    ``sqdist[i, j]`` is the squared distance between observations ``i`` and
    ``j``: ``|y_i - y_j|**2`` for scalar data, the squared 2-Wasserstein
    distance for measures.  Each bin averages half of ``sqdist`` over the
    ordered pairs ``i != j`` whose site distance falls in ``[lo, hi)``.
    """
    pts = np.asarray(locations, dtype=float)
    if pts.ndim == 1:
        pts = pts[:, None]
    n = pts.shape[0]
    sq = np.asarray(sqdist, dtype=float)
    if sq.shape != (n, n):
        raise ValidationError(f"sqdist must be {n}x{n}, got {sq.shape}")
    dist = squareform(pdist(pts)) if n > 1 else np.zeros((1, 1))
    iu, ju = np.triu_indices(n, k=1)
    d = dist[iu, ju]
    if np.any(d == 0.0):
        raise ValidationError("duplicate locations")
    s = sq[iu, ju]
    # ordered pairs (i, j) and (j, i) contribute identically
    which = np.searchsorted(bins.edges, d, side="right") - 1
    inside = (which >= 0) & (which < bins.count)
    counts = 2 * np.bincount(which[inside], minlength=bins.count)
    sums = 2 * np.bincount(which[inside], weights=s[inside], minlength=bins.count)
    keep = counts > 0
    if not np.any(keep):
        raise ValidationError("no pairs in range")
    gamma = sums[keep] / (2.0 * counts[keep])
    return EmpiricalVariogram(bins.centers[keep], gamma, counts[keep])


@dataclass(frozen=True)
class LeastSquaresFit:
    params: MaternParams
    objective: float
    length_scale_grid: np.ndarray = field(repr=False)
    objectives: np.ndarray = field(repr=False)


def _ls_grid(emp: EmpiricalVariogram, size: int) -> np.ndarray:
    hmax = float(np.max(emp.lags))
    return np.geomspace(0.01 * hmax, 10.0 * hmax, size)


def fit_least_squares(emp: EmpiricalVariogram, nu0, length_scale_grid=None,
                      grid_size: int = 200, weighted: bool = False,
                      return_details: bool = False):
    """Fit ``(sigma2, length_scale)`` at fixed smoothness to an experimental semivariogram.

    Scans ``length_scale_grid`` (default: ``grid_size`` log-spaced values from
    1% to 10x the largest lag) and, for each candidate, solves for the sill in
    closed form.  With ``weighted=True`` squared deviations are weighted by
    pair counts.  Returns the :class:`MaternParams` with the smallest sum of
    squared deviations, or a :class:`LeastSquaresFit` with the whole
    objective profile when ``return_details`` is set.
    """
    nu = parse_nu(nu0)
    if np.unique(emp.lags).size < 2:
        raise ValidationError("fewer than 2 points in the experimental semivariogram")
    gamma = np.asarray(emp.gamma, dtype=float)
    if not np.any(gamma > 0):
        raise ValidationError("zero variance data")
    grid = _ls_grid(emp, grid_size) if length_scale_grid is None else np.asarray(
        length_scale_grid, dtype=float).ravel()
    if grid.size == 0 or np.any(grid <= 0):
        raise ValidationError("length-scale grid must be non-empty and positive")
    w = np.asarray(emp.pair_counts, dtype=float) if weighted else np.ones_like(gamma)

    # rows: candidates, columns: bins
    g = unit_matern(emp.lags[None, :], grid[:, None], nu)
    denom = (w * g * g).sum(axis=1)
    sig = (w * gamma * g).sum(axis=1) / denom
    tiny = np.finfo(float).tiny
    sig = np.where(np.isfinite(sig) & (sig > 0), sig, tiny)
    resid = gamma[None, :] - sig[:, None] * g
    objectives = (w * resid * resid).sum(axis=1)
    best = int(np.argmin(objectives))
    params = MaternParams(float(sig[best]), float(grid[best]), nu)
    if return_details:
        return LeastSquaresFit(params, float(objectives[best]), grid, objectives)
    return params
