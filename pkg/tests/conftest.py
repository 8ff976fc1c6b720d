import numpy as np
import pytest

from wkrige.kriging import SiteSet
from wkrige.measures import QuantileGrid, gaussian_quantile_curve
from wkrige.variogram import MaternParams


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


def random_instance(rng, n, d=2, grid_size=50):
    """Random sites, Matérn params and Gaussian-family curves."""
    X = rng.uniform(0.0, 1.0, size=(n, d))
    params = MaternParams(
        sigma2=float(rng.uniform(0.5, 3.0)),
        length_scale=float(rng.uniform(0.1, 0.6)),
        nu=float(rng.choice([0.5, 1.5, 2.5])),
    )
    grid = QuantileGrid(grid_size)
    curves = [
        gaussian_quantile_curve(float(rng.normal()), float(rng.uniform(0.1, 2.0)), grid)
        for _ in range(n)
    ]
    return SiteSet(X), params, curves
