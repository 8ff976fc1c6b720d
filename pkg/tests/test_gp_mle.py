import math

import numpy as np
import pytest

from wkrige.exceptions import NumericalError, ValidationError
from wkrige.gp_mle import (
    JITTER,
    CovParams,
    covariance_matrix,
    log_likelihood,
    mle_fit,
    profile_mean,
    sample_gp,
)
from wkrige.kriging import SiteSet
from wkrige.variogram import MaternParams, matern


def dense_loglik(params, mean, sites, y):
    k = covariance_matrix(sites, params)
    r = y - mean
    sign, logdet = np.linalg.slogdet(k)
    assert sign > 0
    return -0.5 * r @ np.linalg.inv(k) @ r - 0.5 * len(y) * math.log(2 * math.pi) - 0.5 * logdet


def random_sites(rng, n, d=1, span=5.0):
    return SiteSet(rng.uniform(0, span, size=(n, d)))


class TestCovariance:
    def test_semivariogram_relation(self, rng):
        for nu in (0.5, 1.5, 2.5):
            p = CovParams(2.3, 0.7, nu)
            h = rng.uniform(0, 5, size=100)
            # exact up to the rounding of one subtraction at the sill's magnitude
            diff = p.covariance(0.0) - p.covariance(h) - matern(h, p)
            assert np.abs(diff).max() <= 4 * np.finfo(float).eps * p.sigma2
            np.testing.assert_array_equal(p.covariance(h), p.sigma2 - matern(h, p))
            assert p.covariance(0.0) == 2.3

    def test_non_increasing_and_non_negative(self):
        p = CovParams(1.0, 0.5, 2.5)
        k = p.covariance(np.linspace(0, 20, 2000))
        assert np.all(np.diff(k) <= 0) and np.all(k >= 0)

    def test_jitter_on_diagonal(self):
        k = covariance_matrix(SiteSet([[0.0], [1.0]]), CovParams(4.0, 1.0, 0.5))
        assert k[0, 0] == 4.0 + 4.0 * JITTER


class TestProfileMean:
    def test_identity(self, rng):
        y = rng.normal(size=9)
        assert profile_mean(np.eye(9), y) == pytest.approx(y.mean(), rel=1e-14)
        assert profile_mean(7.5 * np.eye(9), y) == pytest.approx(y.mean(), rel=1e-14)

    def test_not_spd(self):
        with pytest.raises(NumericalError, match="covariance not SPD"):
            profile_mean(np.array([[1.0, 2.0], [2.0, 1.0]]), [0.0, 1.0])

    def test_stationarity(self, rng):
        for _ in range(10):
            sites = random_sites(rng, 30)
            p = CovParams(rng.uniform(0.5, 2), rng.uniform(0.3, 2), 1.5)
            y = sample_gp(sites, p, mean=2.0, seed=int(rng.integers(1e6))).values
            m = profile_mean(covariance_matrix(sites, p), y)
            eps = 0.1
            deriv = (log_likelihood(p, m + eps, sites, y) - log_likelihood(p, m - eps, sites, y)) / (2 * eps)
            assert abs(deriv) <= 1e-8
            assert log_likelihood(p, m, sites, y) >= log_likelihood(p, m + 0.01, sites, y)


class TestLogLikelihood:
    def test_one_dimensional_density(self):
        s2, y, m = 1.7, 0.4, -0.3
        p = CovParams(s2, 1.0, 0.5)
        k = s2 * (1 + JITTER)
        ref = -0.5 * (y - m) ** 2 / k - 0.5 * math.log(2 * math.pi) - 0.5 * math.log(k)
        assert log_likelihood(p, m, SiteSet([[0.0]]), [y]) == pytest.approx(ref, rel=1e-14)

    def test_zero_residual(self, rng):
        sites = random_sites(rng, 8)
        p = CovParams(1.2, 0.8, 2.5)
        _, logdet = np.linalg.slogdet(covariance_matrix(sites, p))
        ref = -4 * math.log(2 * math.pi) - 0.5 * logdet
        assert log_likelihood(p, 3.0, sites, np.full(8, 3.0)) == pytest.approx(ref, rel=1e-12)

    def test_dense_oracle(self, rng):
        for _ in range(20):
            sites = random_sites(rng, int(rng.integers(2, 40)), d=2)
            p = CovParams(rng.uniform(0.2, 4), rng.uniform(0.1, 1.5), float(rng.choice([0.5, 1.5, 2.5])))
            y = rng.normal(size=sites.n) * 2
            ref = dense_loglik(p, 0.5, sites, y)
            assert log_likelihood(p, 0.5, sites, y) == pytest.approx(ref, rel=1e-8)

    def test_permutation_invariant(self, rng):
        pts = rng.uniform(0, 3, size=(15, 2))
        y = rng.normal(size=15)
        perm = rng.permutation(15)
        p = CovParams(1.0, 0.6, 1.5)
        a = log_likelihood(p, 0.1, SiteSet(pts), y)
        b = log_likelihood(p, 0.1, SiteSet(pts[perm]), y[perm])
        assert a == pytest.approx(b, rel=1e-12)


class TestMleFit:
    def test_single_candidate_profiles(self, rng):
        sites = random_sites(rng, 25)
        y = sample_gp(sites, CovParams(2.0, 1.0, 1.5), mean=1.0, seed=3).values
        fit = mle_fit(sites, y, "3/2", [0.8])
        unit = CovParams(1.0, 0.8, 1.5)
        k = covariance_matrix(sites, unit)
        m = profile_mean(k, y)
        r = y - m
        s2 = r @ np.linalg.solve(k, r) / 25
        assert fit.params.length_scale == 0.8
        assert fit.mean == pytest.approx(m, rel=1e-12)
        assert fit.params.sigma2 == pytest.approx(s2, rel=1e-10)
        assert fit.log_likelihood == pytest.approx(log_likelihood(fit.params, m, sites, y), rel=1e-8)

    def test_profiled_likelihood_is_grid_argmax(self, rng):
        sites = random_sites(rng, 40)
        y = sample_gp(sites, CovParams(1.0, 0.5, 2.5), seed=11).values
        grid = np.geomspace(0.05, 5, 30)
        fit = mle_fit(sites, y, 2.5, grid)
        brute = [mle_fit(sites, y, 2.5, [l]).log_likelihood for l in grid]
        assert fit.log_likelihood == max(brute)
        assert fit.params.length_scale == grid[int(np.argmax(brute))]

    def test_constant_data_is_degenerate(self, rng):
        fit = mle_fit(random_sites(rng, 10), np.full(10, 4.2), 1.5, [0.5, 1.0])
        assert fit.degenerate
        assert fit.mean == pytest.approx(4.2, rel=1e-12)
        assert fit.params.sigma2 > 0

    def test_errors(self, rng):
        sites = random_sites(rng, 5)
        with pytest.raises(ValidationError):
            mle_fit(sites, np.zeros(4), 1.5, [1.0])
        with pytest.raises(ValidationError):
            mle_fit(sites, np.zeros(5), 1.5, [])
        with pytest.raises(ValidationError):
            mle_fit(SiteSet([[0.0]]), [1.0], 1.5, [1.0])

    def test_recovery_smoke(self):
        hits = 0
        for seed in range(5):
            rng = np.random.default_rng(1000 + seed)
            sites = SiteSet(np.sort(rng.uniform(0, 40, size=(200, 1)), axis=0))
            truth = CovParams(2.0, 1.0, 1.5)
            y = sample_gp(sites, truth, mean=3.0, seed=seed).values
            fit = mle_fit(sites, y, 1.5, np.geomspace(0.05, 20, 100))
            hits += (0.5 <= fit.params.length_scale <= 2.0) and (1.0 <= fit.params.sigma2 <= 4.0)
        assert hits >= 4


class TestSampling:
    def test_deterministic(self, rng):
        sites = random_sites(rng, 20, d=2)
        p = CovParams(1.0, 0.4, 2.5)
        a, b = sample_gp(sites, p, seed=5), sample_gp(sites, p, seed=5)
        assert np.array_equal(a.values, b.values)
        assert not np.array_equal(a.values, sample_gp(sites, p, seed=6).values)

    def test_vanishing_sill(self, rng):
        sites = random_sites(rng, 10)
        v = sample_gp(sites, CovParams(1e-18, 1.0, 1.5), mean=-2.0, seed=1).values
        assert np.abs(v + 2.0).max() <= 1e-8

    def test_single_site_variance(self):
        sites = SiteSet([[0.0]])
        p = CovParams(2.5, 1.0, 0.5)
        draws = np.array([sample_gp(sites, p, seed=s).values[0] for s in range(10_000)])
        assert abs(draws.var() - 2.5) <= 0.05 * 2.5

    def test_not_spd(self):
        p = MaternParams(1.0, 1e3, 2.5)
        with pytest.raises(NumericalError):
            sample_gp(SiteSet(np.linspace(0, 1e-3, 30)[:, None]), p, jitter=0.0)
