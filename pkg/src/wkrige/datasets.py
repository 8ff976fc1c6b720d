"""Synthetic data generators."""

from __future__ import annotations

import numpy as np

from .exceptions import ValidationError
from .measures import DEFAULT_GRID_SIZE, QuantileGrid, gaussian_quantile_curve

__all__ = ["make_gaussian_measures", "toy_measure"]


def toy_measure(u: float, v: float, grid: QuantileGrid):
    """The toy field value at ``(u, v)``: the normal law with mean ``u`` and variance ``v``."""
    return gaussian_quantile_curve(u, v, grid)


def make_gaussian_measures(n: int, seed: int = 0, grid_size: int = DEFAULT_GRID_SIZE):
    """Sample the Gaussian toy field at ``n`` uniform sites of ``[0, 1] x (0, 2]``.

    Returns
    -------
    X : ndarray of shape (n, 2)
        Sites ``(u, v)``.
    Y : ndarray of shape (n, grid_size)
        Quantile curves of ``N(u, v)`` on the midpoint grid.
    """
    if int(n) != n or n < 2:
        raise ValidationError(f"n must be an integer >= 2, got {n!r}")
    rng = np.random.default_rng(seed)
    u = rng.uniform(0.0, 1.0, size=int(n))
    # uniform on [0, 2) reflected onto (0, 2]
    v = 2.0 - rng.uniform(0.0, 2.0, size=int(n))
    grid = QuantileGrid(grid_size)
    X = np.column_stack([u, v])
    Y = np.vstack([toy_measure(a, b, grid).values for a, b in X])
    return X, Y
