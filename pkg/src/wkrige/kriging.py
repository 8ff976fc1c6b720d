"""Ordinary Kriging weights and predictors for scalar and quantile-valued data.

Both predictors share one linear-algebra core: the bordered system

    [[Gamma, 1], [1^T, 0]] @ [lambda; alpha] = [gamma_star; 1]

built from a semivariogram.  Quantile-valued data only changes what the
weights are applied to.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Optional, Sequence

import numpy as np
import scipy.linalg as spl
from scipy.linalg import lapack
from scipy.spatial.distance import cdist, pdist, squareform

from .exceptions import ConvergenceError, IllConditionedError, ValidationError
from .measures import (
    QuantileCurve,
    linear_combination,
    monotone_rearrange,
    stack_values,
)
from .variogram import MaternParams, matern

__all__ = [
    "RCOND_THRESHOLD",
    "SiteSet",
    "GammaMatrix",
    "KrigingSolution",
    "assemble_gamma",
    "solve_weights",
    "solve_weights_nonneg",
    "weights_matrix",
    "predict_scalar",
    "predict_quantile",
]

RCOND_THRESHOLD = 1e-12
KKT_TOL = 1e-8


class SiteSet:
    """Distinct observation sites in R^d with an optional affine rescaling.

    Parameters
    ----------
    points : array-like of shape (n, d)
        Site coordinates in the original units.
    offset, factor : array-like of shape (d,), optional
        Coordinates are mapped to ``(x - offset) * factor`` before any
        distance is computed.  Both default to the identity map.
    """

    def __init__(self, points, offset=None, factor=None):
        pts = np.array(points, dtype=float)
        if pts.ndim == 1:
            pts = pts[:, None]
        if pts.ndim != 2 or pts.shape[0] < 1 or pts.shape[1] < 1:
            raise ValidationError(f"points must be a non-empty (n, d) array, got shape {pts.shape}")
        if not np.all(np.isfinite(pts)):
            raise ValidationError("site coordinates must be finite")
        d = pts.shape[1]
        self.offset = np.zeros(d) if offset is None else np.asarray(offset, dtype=float).reshape(d)
        self.factor = np.ones(d) if factor is None else np.asarray(factor, dtype=float).reshape(d)
        if np.any(self.factor <= 0) or not np.all(np.isfinite(self.factor)):
            raise ValidationError("scaling factors must be positive and finite")
        pts.flags.writeable = False
        self.points = pts
        self.scaled = self.transform(pts)
        self.scaled.flags.writeable = False
        if self.n > 1 and pdist(self.scaled).min() <= 0.0:
            raise ValidationError("duplicate locations")

    @classmethod
    def minmax(cls, points) -> "SiteSet":
        """Sites with each coordinate min-max scaled onto [0, 1]."""
        pts = np.asarray(points, dtype=float)
        if pts.ndim == 1:
            pts = pts[:, None]
        lo = pts.min(axis=0)
        span = pts.max(axis=0) - lo
        factor = np.where(span > 0, 1.0 / np.where(span > 0, span, 1.0), 1.0)
        return cls(pts, offset=lo, factor=factor)

    @property
    def n(self) -> int:
        return self.points.shape[0]

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    def transform(self, points) -> np.ndarray:
        pts = np.asarray(points, dtype=float)
        if pts.ndim == 1:
            pts = pts[None, :] if pts.shape[0] == self.dim else pts[:, None]
        if pts.shape[1] != self.dim:
            raise ValidationError(f"expected points of dimension {self.dim}, got {pts.shape[1]}")
        return (pts - self.offset) * self.factor

    def distances(self) -> np.ndarray:
        if self.n == 1:
            return np.zeros((1, 1))
        return squareform(pdist(self.scaled))

    def distances_to(self, targets) -> np.ndarray:
        """Distances from every target (rows) to every site (columns)."""
        return cdist(self.transform(targets), self.scaled)

    def subset(self, index) -> "SiteSet":
        return SiteSet(self.points[index], self.offset, self.factor)

    def scaling_dict(self) -> dict:
        return {"offset": self.offset.tolist(), "factor": self.factor.tolist()}

    def __repr__(self):
        return f"SiteSet(n={self.n}, dim={self.dim})"


def _rcond(lu, anorm):
    gecon, = lapack.get_lapack_funcs(("gecon",), (lu,))
    rcond, info = gecon(lu, anorm, norm="1")
    return float(rcond) if info == 0 else 0.0


@dataclass(frozen=True, eq=False)
class GammaMatrix:
    """Semivariogram matrix of a site set and the factorized bordered system.

    The bordered system is factorized at unit scale (divided by
    ``sigma2 + nugget``) so that conditioning does not depend on the sill.
    """

    sites: SiteSet
    params: MaternParams
    matrix: np.ndarray = field(repr=False)
    scale: float
    lu: np.ndarray = field(repr=False)
    piv: np.ndarray = field(repr=False)
    rcond: float

    @property
    def n(self) -> int:
        return self.sites.n

    @cached_property
    def inverse(self) -> np.ndarray:
        """Explicit inverse of Gamma (not of the bordered matrix)."""
        try:
            inv = spl.inv(self.matrix / self.scale, check_finite=False)
        except (spl.LinAlgError, ValueError) as exc:
            raise IllConditionedError(
                f"ill-conditioned Kriging system: semivariogram matrix is singular for {self.params}"
            ) from exc
        inv /= self.scale
        inv.flags.writeable = False
        return inv

    def bordered(self) -> np.ndarray:
        return _border(self.matrix / self.scale)

    def solve_unit(self, rhs: np.ndarray) -> np.ndarray:
        """Solve the unit-scale bordered system with one step of iterative refinement."""
        a = self.bordered()
        x = spl.lu_solve((self.lu, self.piv), rhs, check_finite=False)
        x += spl.lu_solve((self.lu, self.piv), rhs - a @ x, check_finite=False)
        return x

    def semivariogram_to(self, targets) -> np.ndarray:
        """Rows of ``gamma(|x_i - target|)`` for each target, unit scale."""
        d = self.sites.distances_to(targets)
        return matern(d, self.params) / self.scale


def _border(g: np.ndarray) -> np.ndarray:
    n = g.shape[0]
    a = np.empty((n + 1, n + 1))
    a[:n, :n] = g
    a[:n, n] = 1.0
    a[n, :n] = 1.0
    a[n, n] = 0.0
    return a


def _factorize(g_unit: np.ndarray, params, threshold: float):
    a = _border(g_unit)
    lu, piv = spl.lu_factor(a, check_finite=False)
    rc = _rcond(lu, np.abs(a).sum(axis=0).max())
    if not rc >= threshold:
        raise IllConditionedError(
            f"ill-conditioned Kriging system (rcond={rc:.3e}) for {params}"
        )
    return lu, piv, rc


def assemble_gamma(sites: SiteSet, params: MaternParams,
                   rcond_threshold: float = RCOND_THRESHOLD) -> GammaMatrix:
    """Build and factorize the semivariogram matrix of ``sites``.

    Raises :class:`IllConditionedError` when the reciprocal condition
    estimate of the bordered matrix falls below ``rcond_threshold``.
    """
    g = matern(sites.distances(), params)
    g = np.atleast_2d(np.asarray(g, dtype=float))
    np.fill_diagonal(g, 0.0)
    g.flags.writeable = False
    scale = params.sigma2 + params.nugget
    lu, piv, rc = _factorize(g / scale, params, rcond_threshold)
    return GammaMatrix(sites, params, g, scale, lu, piv, rc)


@dataclass(frozen=True)
class KrigingSolution:
    weights: np.ndarray
    multiplier: float
    target: np.ndarray

    def __post_init__(self):
        self.weights.flags.writeable = False


def _check_params(gm: GammaMatrix, params: Optional[MaternParams]):
    if params is not None and params != gm.params:
        raise ValidationError("params differ from those used to assemble the Gamma matrix")


def _site_hits(gm: GammaMatrix, targets: np.ndarray):
    """Index of the site each target coincides with (after scaling), else -1."""
    d = gm.sites.distances_to(targets)
    hit = np.full(d.shape[0], -1)
    rows, cols = np.nonzero(d == 0.0)
    hit[rows] = cols
    return hit, d


def weights_matrix(gm: GammaMatrix, targets) -> tuple[np.ndarray, np.ndarray]:
    """Unconstrained Kriging weights for many targets at once.

    Returns ``(weights, multipliers)`` with shapes ``(m, n)`` and ``(m,)``.
    Targets that coincide with a site get the corresponding unit vector.
    """
    hit, d = _site_hits(gm, _as_points(targets, gm.sites.dim))
    m, n = d.shape
    rhs = np.ones((n + 1, m))
    rhs[:n] = (matern(d, gm.params) / gm.scale).T
    sol = gm.solve_unit(rhs)
    w = sol[:n].T.copy()
    alpha = sol[n] * gm.scale
    for row in np.nonzero(hit >= 0)[0]:
        w[row] = 0.0
        w[row, hit[row]] = 1.0
        alpha[row] = 0.0
    return w, alpha


def _as_points(targets, dim: int) -> np.ndarray:
    pts = np.asarray(targets, dtype=float)
    if pts.ndim == 1:
        pts = pts.reshape(1, -1) if dim > 1 or pts.size == 1 else pts[:, None]
    if pts.ndim != 2 or pts.shape[1] != dim:
        raise ValidationError(f"targets must have dimension {dim}, got shape {pts.shape}")
    return pts


def _as_point(target, dim: int) -> np.ndarray:
    t = np.asarray(target, dtype=float).ravel()
    if t.size != dim:
        raise ValidationError(f"target has dimension {t.size}, expected {dim}")
    return t


def solve_weights(gm: GammaMatrix, target, params: Optional[MaternParams] = None) -> KrigingSolution:
    """Ordinary Kriging weights and Lagrange multiplier for a single target."""
    _check_params(gm, params)
    t = _as_point(target, gm.sites.dim)
    w, alpha = weights_matrix(gm, t[None, :])
    return KrigingSolution(w[0], float(alpha[0]), t)


def _project_simplex(v: np.ndarray) -> np.ndarray:
    u = np.sort(v)[::-1]
    css = np.cumsum(u) - 1.0
    k = np.arange(1, v.size + 1)
    rho = np.nonzero(u - css / k > 0)[0][-1]
    theta = css[rho] / (rho + 1.0)
    return np.maximum(v - theta, 0.0)


def _reduced_solve(g: np.ndarray, rhs: np.ndarray, free: np.ndarray):
    sub = _border(g[np.ix_(free, free)])
    b = np.append(rhs[free], 1.0)
    try:
        x = spl.solve(sub, b, check_finite=False)
    except (spl.LinAlgError, ValueError) as exc:
        raise ConvergenceError("QP did not converge: singular reduced system") from exc
    return x[:-1], x[-1]


def solve_weights_nonneg(gm: GammaMatrix, target, params: Optional[MaternParams] = None,
                         tol: float = KKT_TOL, max_iter: Optional[int] = None) -> KrigingSolution:
    """Kriging weights constrained to the probability simplex.

    Minimizes ``-l^T G l + 2 l^T g*`` subject to ``sum(l) = 1`` and ``l >= 0``
    with a primal active-set method.  The objective is convex on the affine
    constraint set because a valid semivariogram matrix is conditionally
    negative definite.  A non-negative weight vector yields a monotone
    combination of quantile curves, so no rearrangement is needed afterwards.
    """
    _check_params(gm, params)
    t = _as_point(target, gm.sites.dim)
    w0, alpha0 = weights_matrix(gm, t[None, :])
    lam = w0[0]
    if np.all(lam >= 0.0):
        return KrigingSolution(lam, float(alpha0[0]), t)

    n = gm.n
    g = gm.matrix / gm.scale
    gstar = gm.semivariogram_to(t[None, :])[0]
    cap = 3 * n + 10 if max_iter is None else max_iter

    lam = _project_simplex(lam)
    free = lam > 0.0
    alpha = 0.0
    for _ in range(cap):
        idx = np.nonzero(free)[0]
        cand_f, alpha = _reduced_solve(g, gstar, idx)
        if np.all(cand_f >= 0.0):
            lam = np.zeros(n)
            lam[idx] = cand_f
            mult = 2.0 * (gstar - g @ lam - alpha)
            mult[free] = 0.0
            j = int(np.argmin(mult))
            if mult[j] >= -tol:
                break
            free[j] = True
            continue
        # step towards the reduced solution until the first weight hits zero
        cur = lam[idx]
        shrinking = cand_f < cur
        ratios = np.full(idx.size, np.inf)
        ratios[shrinking] = cur[shrinking] / (cur[shrinking] - cand_f[shrinking])
        k = int(np.argmin(ratios))
        step = min(1.0, ratios[k])
        lam[idx] = cur + step * (cand_f - cur)
        lam[idx[k]] = 0.0
        lam[lam < 0.0] = 0.0
        free = lam > 0.0
        if not np.any(free):
            raise ConvergenceError("QP did not converge: empty free set")
    else:
        raise ConvergenceError(f"QP did not converge within {cap} iterations")

    lam = lam / lam.sum()
    resid = _kkt_residual(g, gstar, lam, alpha)
    if resid > tol * max(1.0, float(np.abs(g).max())):
        raise ConvergenceError(f"QP did not converge: KKT residual {resid:.3e}")
    return KrigingSolution(lam, float(alpha * gm.scale), t)


def _kkt_residual(g, gstar, lam, alpha) -> float:
    free = lam > 0.0
    slack = gstar - g @ lam - alpha
    stationarity = np.abs(slack[free]).max(initial=0.0)
    dual = max(0.0, -2.0 * slack[~free].min(initial=0.0))
    primal = max(abs(lam.sum() - 1.0), max(0.0, -lam.min()))
    return max(stationarity, dual, primal)


def predict_scalar(sites: SiteSet, values, params: MaternParams, target,
                   gm: Optional[GammaMatrix] = None) -> float:
    """Ordinary Kriging prediction of a scalar field at ``target``."""
    y = np.asarray(values, dtype=float).ravel()
    if y.size != sites.n:
        raise ValidationError(f"expected {sites.n} values, got {y.size}")
    gm = assemble_gamma(sites, params) if gm is None else gm
    sol = solve_weights(gm, target, params)
    return float(sol.weights @ y)


def predict_quantile(sites: SiteSet, curves: Sequence[QuantileCurve], params: MaternParams,
                     target, mode: str = "sorted",
                     gm: Optional[GammaMatrix] = None) -> QuantileCurve:
    """Kriging prediction of a measure at ``target`` as a quantile curve.

    ``mode="sorted"`` combines the curves with unconstrained weights and sorts
    the result; ``mode="constrained"`` uses simplex-constrained weights,
    whose combination is monotone already.
    """
    if len(curves) != sites.n:
        raise ValidationError(f"expected {sites.n} curves, got {len(curves)}")
    stack_values(curves)
    gm = assemble_gamma(sites, params) if gm is None else gm
    if mode == "sorted":
        sol = solve_weights(gm, target, params)
        return monotone_rearrange(linear_combination(sol.weights, curves))
    if mode == "constrained":
        sol = solve_weights_nonneg(gm, target, params)
        combo = linear_combination(sol.weights, curves)
        return QuantileCurve(combo.grid, combo.values)
    raise ValidationError(f"unknown mode {mode!r}; expected 'sorted' or 'constrained'")
