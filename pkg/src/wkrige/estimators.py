"""scikit-learn compatible estimators built on the functional API.

``QuantileKriging`` predicts measures (as quantile curves on a fixed grid)
from site coordinates, ``OrdinaryKriging`` is the scalar counterpart, and
``EmpiricalQuantileEncoder`` turns raw sample sets into quantile curves so
the two compose in a :class:`~sklearn.pipeline.Pipeline`.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

from .crossval import default_length_scale_grid, grid_search_cv
from .exceptions import ValidationError
from .gp_mle import mle_fit
from .kriging import SiteSet, assemble_gamma, solve_weights_nonneg, weights_matrix
from .measures import QuantileCurve, QuantileGrid, empirical_quantile
from .metrics import evaluate_metrics
from .variogram import (
    NU_VALUES,
    MaternParams,
    empirical_variogram,
    fit_least_squares,
    make_bins,
    pairwise_squared_w2,
    scalar_squared_differences,
)

__all__ = ["QuantileKriging", "OrdinaryKriging", "EmpiricalQuantileEncoder"]

_METHODS = ("cv", "variogram-ls", "fixed")
_MODES = ("sorted", "constrained")


def _check_curves(Y, n_rows=None):
    if isinstance(Y, (list, tuple)) and Y and isinstance(Y[0], QuantileCurve):
        Y = np.vstack([c.values for c in Y])
    Y = check_array(Y, ensure_2d=True, dtype=float)
    if n_rows is not None and Y.shape[0] != n_rows:
        raise ValidationError(f"X has {n_rows} rows but Y has {Y.shape[0]}")
    bad = np.nonzero(np.any(np.diff(Y, axis=1) < 0, axis=1))[0]
    if bad.size:
        raise ValidationError(f"quantile rows must be non-decreasing (rows {bad.tolist()})")
    return Y


def _sites(X, scale_coords):
    return SiteSet.minmax(X) if scale_coords else SiteSet(X)


def _experimental(locations, sqdist, bins):
    # an empty semivariogram is the extreme case of too few points for a fit
    try:
        return empirical_variogram(locations, sqdist, bins)
    except ValidationError as exc:
        if "no pairs in range" in str(exc):
            raise ValidationError(
                "fewer than 2 points in the experimental semivariogram (no pairs in range)") from exc
        raise


def _ls_select(emp, nu_set, weighted):
    fits = [fit_least_squares(emp, nu, weighted=weighted, return_details=True) for nu in nu_set]
    return min(fits, key=lambda f: f.objective)


class _KrigingBase(RegressorMixin, BaseEstimator):

    def _fit_sites(self, X):
        X = check_array(X, ensure_2d=True, dtype=float)
        if X.shape[0] < 2:
            raise ValidationError("at least 2 observations are required")
        self.n_features_in_ = X.shape[1]
        self.sites_ = _sites(X, self.scale_coords)
        return X

    def _length_scales(self):
        if self.length_scales is not None:
            return np.asarray(self.length_scales, dtype=float)
        return default_length_scale_grid(self.sites_, self.n_length_scales)

    def _bins(self):
        return make_bins(self.n_bins, self.bin_max_distance, self.sites_.scaled)

    def _weights(self, X, mode):
        X = check_array(X, ensure_2d=True, dtype=float)
        if X.shape[1] != self.n_features_in_:
            raise ValidationError(
                f"X has {X.shape[1]} features, but the model was fitted with {self.n_features_in_}"
            )
        if mode == "sorted":
            return weights_matrix(self.gamma_, X)[0]
        if mode == "constrained":
            return np.vstack([solve_weights_nonneg(self.gamma_, x).weights for x in X])
        raise ValidationError(f"unknown mode {mode!r}; expected one of {_MODES}")


class QuantileKriging(_KrigingBase):
    """Ordinary Kriging of probability measures in the 2-Wasserstein geometry.

    Targets are quantile curves sampled on a common midpoint grid, one row
    per site.  Predictions are rows on the same grid.

    Parameters
    ----------
    method : {"cv", "variogram-ls", "fixed"}, default="cv"
        How Matérn parameters are chosen: leave-one-out grid search (virtual
        formulas), least squares on the experimental semivariogram, or the
        user-supplied ``params``.
    nu_set : sequence of float, default=(0.5, 1.5, 2.5)
        Candidate smoothness values.
    length_scales : array-like, optional
        Length-scale grid for ``"cv"``; defaults to ``n_length_scales``
        log-spaced values between 0.05 and 2 times the largest site distance.
    n_length_scales : int, default=100
    mode : {"sorted", "constrained"}, default="sorted"
        ``"sorted"`` uses unconstrained weights and sorts the combination;
        ``"constrained"`` uses non-negative weights.
    n_bins : int, default=15
        Number of experimental-semivariogram bins for ``"variogram-ls"``.
    bin_max_distance : float, optional
        Upper edge of the last bin; defaults to half the largest site distance.
    ls_weighted : bool, default=False
        Weight least-squares residuals by bin pair counts.
    params : MaternParams, optional
        Model used by ``method="fixed"``.
    scale_coords : bool, default=False
        Min-max scale each input coordinate to [0, 1] before computing distances.
    nugget : float, default=0.0
        Nugget added to the least-squares model (``"variogram-ls"`` only).
    n_threads : int, optional
        Workers for the candidate search; falls back to ``WKRIGE_THREADS``.

    Attributes
    ----------
    params_ : MaternParams
    cv_report_ : CvReport or None
    variogram_ : EmpiricalVariogram or None
    grid_ : QuantileGrid
    """

    def __init__(self, method="cv", nu_set=NU_VALUES, length_scales=None, n_length_scales=100,
                 mode="sorted", n_bins=15, bin_max_distance=None, ls_weighted=False,
                 params=None, scale_coords=False, nugget=0.0, n_threads=None):
        self.method = method
        self.nu_set = nu_set
        self.length_scales = length_scales
        self.n_length_scales = n_length_scales
        self.mode = mode
        self.nugget = nugget
        self.n_bins = n_bins
        self.bin_max_distance = bin_max_distance
        self.ls_weighted = ls_weighted
        self.params = params
        self.scale_coords = scale_coords
        self.n_threads = n_threads

    def fit(self, X, Y):
        if self.method not in _METHODS:
            raise ValidationError(f"unknown method {self.method!r}; expected one of {_METHODS}")
        if self.mode not in _MODES:
            raise ValidationError(f"unknown mode {self.mode!r}; expected one of {_MODES}")
        if self.nugget and self.method != "variogram-ls":
            raise ValidationError("nugget is only supported with method='variogram-ls'")
        X = self._fit_sites(X)
        Y = _check_curves(Y, X.shape[0])
        self.grid_ = QuantileGrid(Y.shape[1])
        self.values_ = Y
        self.cv_report_ = None
        self.variogram_ = None
        if self.method == "cv":
            self.cv_report_ = grid_search_cv(self.sites_, Y, self._length_scales(), self.nu_set,
                                             threads=self.n_threads)
            self.params_ = self.cv_report_.params
        elif self.method == "variogram-ls":
            curves = [QuantileCurve(self.grid_, row) for row in Y]
            self.variogram_ = _experimental(self.sites_.scaled, pairwise_squared_w2(curves),
                                            self._bins())
            self.ls_fit_ = _ls_select(self.variogram_, self.nu_set, self.ls_weighted)
            p = self.ls_fit_.params
            self.params_ = MaternParams(p.sigma2, p.length_scale, p.nu, self.nugget)
        else:
            if not isinstance(self.params, MaternParams):
                raise ValidationError("method='fixed' requires a MaternParams instance in params")
            self.params_ = self.params
        self.gamma_ = assemble_gamma(self.sites_, self.params_)
        return self

    def predict_weights(self, X, mode=None):
        """Kriging weights, one row per target."""
        check_is_fitted(self, "gamma_")
        return self._weights(X, self.mode if mode is None else mode)

    def predict(self, X, mode=None):
        """Predicted quantile curves, shape ``(n_targets, grid_size)``."""
        mode = self.mode if mode is None else mode
        out = self.predict_weights(X, mode) @ self.values_
        if mode == "sorted":
            out.sort(axis=1)
        return out

    def predict_curves(self, X, mode=None):
        return [QuantileCurve(self.grid_, row) for row in self.predict(X, mode)]

    def score(self, X, Y, sample_weight=None):
        """Negative root-mean-square 2-Wasserstein error (higher is better)."""
        Y = _check_curves(Y)
        return -evaluate_metrics(self.predict(X), Y).rmse_w


class OrdinaryKriging(_KrigingBase):
    """Ordinary Kriging of a scalar field.

    ``method`` is one of ``"variogram-ls"``, ``"mle"`` (Gaussian likelihood
    with profiled mean and sill), ``"cv"`` (virtual leave-one-out) or
    ``"fixed"``.  Other parameters mirror :class:`QuantileKriging`.
    """

    def __init__(self, method="mle", nu_set=NU_VALUES, length_scales=None, n_length_scales=100,
                 n_bins=15, bin_max_distance=None, ls_weighted=False, params=None,
                 scale_coords=False, n_threads=None):
        self.method = method
        self.nu_set = nu_set
        self.length_scales = length_scales
        self.n_length_scales = n_length_scales
        self.n_bins = n_bins
        self.bin_max_distance = bin_max_distance
        self.ls_weighted = ls_weighted
        self.params = params
        self.scale_coords = scale_coords
        self.n_threads = n_threads

    def fit(self, X, y):
        X = self._fit_sites(X)
        y = check_array(np.asarray(y, dtype=float).reshape(-1, 1), dtype=float).ravel()
        if y.size != X.shape[0]:
            raise ValidationError(f"X has {X.shape[0]} rows but y has {y.size}")
        self.y_ = y
        if self.method == "mle":
            fits = [mle_fit(self.sites_, y, nu, self._length_scales()) for nu in self.nu_set]
            self.mle_fit_ = max(fits, key=lambda f: f.log_likelihood)
            self.params_ = MaternParams(self.mle_fit_.params.sigma2,
                                        self.mle_fit_.params.length_scale, self.mle_fit_.params.nu)
        elif self.method == "variogram-ls":
            self.variogram_ = _experimental(self.sites_.scaled, scalar_squared_differences(y),
                                            self._bins())
            self.params_ = _ls_select(self.variogram_, self.nu_set, self.ls_weighted).params
        elif self.method == "cv":
            self.cv_report_ = grid_search_cv(self.sites_, y[:, None], self._length_scales(),
                                             self.nu_set, threads=self.n_threads)
            self.params_ = self.cv_report_.params
        elif self.method == "fixed":
            if not isinstance(self.params, MaternParams):
                raise ValidationError("method='fixed' requires a MaternParams instance in params")
            self.params_ = self.params
        else:
            raise ValidationError(f"unknown method {self.method!r}")
        self.gamma_ = assemble_gamma(self.sites_, self.params_)
        return self

    def predict(self, X):
        check_is_fitted(self, "gamma_")
        return self._weights(X, "sorted") @ self.y_


class EmpiricalQuantileEncoder(TransformerMixin, BaseEstimator):
    """Map each sample set to its empirical quantile curve on a midpoint grid."""

    def __init__(self, grid_size=100):
        self.grid_size = grid_size

    def fit(self, X, y=None):
        self.grid_ = QuantileGrid(self.grid_size)
        return self

    def transform(self, X):
        check_is_fitted(self, "grid_")
        return np.vstack([empirical_quantile(s, self.grid_).values for s in X])
