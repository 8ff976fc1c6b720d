import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from wkrige.exceptions import ValidationError
from wkrige.measures import QuantileCurve, QuantileGrid, gaussian_quantile_curve
from wkrige.variogram import (
    BinSpec,
    EmpiricalVariogram,
    MaternParams,
    empirical_variogram,
    fit_least_squares,
    make_bins,
    matern,
    pairwise_squared_w2,
    parse_nu,
    scalar_squared_differences,
)

NUS = (0.5, 1.5, 2.5)


def closed_form(h, s2, ls, nu):
    # written out independently of the library
    if nu == 0.5:
        return s2 * (1 - math.exp(-h / ls))
    if nu == 1.5:
        a = math.sqrt(3) * h / ls
        return s2 * (1 - (1 + a) * math.exp(-a))
    a = math.sqrt(5) * h / ls
    return s2 * (1 - (1 + a + 5 * h * h / (3 * ls * ls)) * math.exp(-a))


class TestParams:
    @pytest.mark.parametrize("text,value", [("1/2", 0.5), ("3/2", 1.5), ("2.5", 2.5), (1.5, 1.5)])
    def test_parse_nu(self, text, value):
        assert parse_nu(text) == value

    @pytest.mark.parametrize("bad", [1.0, "2", 0.0, "x"])
    def test_parse_nu_rejects(self, bad):
        with pytest.raises(ValidationError):
            parse_nu(bad)

    @pytest.mark.parametrize("kw", [dict(sigma2=0.0), dict(length_scale=-1.0), dict(nugget=-0.1)])
    def test_rejects_invalid(self, kw):
        base = dict(sigma2=1.0, length_scale=1.0, nu=1.5)
        base.update(kw)
        with pytest.raises(ValidationError):
            MaternParams(**base)


class TestMatern:
    @pytest.mark.parametrize("nu", NUS)
    def test_zero_lag(self, nu):
        assert matern(0.0, MaternParams(3.3, 0.7, nu)) == 0.0

    def test_exponential_example(self):
        assert matern(0.5, MaternParams(1.0, 0.5, 0.5)) == pytest.approx(1 - math.exp(-1), abs=1e-15)
        assert abs(matern(0.5, MaternParams(1.0, 0.5, 0.5)) - 0.632121) < 1e-6

    def test_sill_example(self):
        assert abs(matern(10.0, MaternParams(1.0, 0.5, 1.5)) - 1.0) < 1e-6

    def test_matches_hand_closed_forms(self, rng):
        for _ in range(500):
            nu = float(rng.choice(NUS))
            s2, ls, h = rng.uniform(0.1, 5), rng.uniform(0.05, 3), rng.uniform(0, 10)
            assert matern(h, MaternParams(s2, ls, nu)) == pytest.approx(closed_form(h, s2, ls, nu), rel=1e-12, abs=1e-15)

    def test_monotone_on_random_pairs(self, rng):
        for nu in NUS:
            ls = rng.uniform(0.01, 5, size=10_000)
            s2 = rng.uniform(0.01, 10, size=10_000)
            h = rng.uniform(0, 20, size=10_000)
            h2 = h + rng.uniform(0, 5, size=10_000)
            g1 = np.array([matern(a, MaternParams(s, l_, nu)) for a, s, l_ in zip(h, s2, ls)])
            g2 = np.array([matern(a, MaternParams(s, l_, nu)) for a, s, l_ in zip(h2, s2, ls)])
            assert np.all(g2 >= g1)

    @pytest.mark.parametrize("nu", NUS)
    def test_sill_at_twenty_length_scales(self, nu, rng):
        for s2, ls in rng.uniform(0.1, 10, size=(50, 2)):
            assert abs(matern(20 * ls, MaternParams(s2, ls, nu)) - s2) <= 1e-6 * s2

    @pytest.mark.parametrize("nu", NUS)
    def test_linear_sill_scaling_exact(self, nu, rng):
        h = rng.uniform(0, 5, size=200)
        base = matern(h, MaternParams(1.3, 0.8, nu))
        for c in [0.25, 2.0, 8.0, 1024.0]:
            np.testing.assert_array_equal(matern(h, MaternParams(1.3 * c, 0.8, nu)), c * base)

    @pytest.mark.parametrize("nu", NUS)
    def test_linear_sill_scaling_general(self, nu, rng):
        h = rng.uniform(0, 5, size=200)
        base = matern(h, MaternParams(1.3, 0.8, nu))
        for c in rng.uniform(0.01, 100, size=10):
            np.testing.assert_allclose(matern(h, MaternParams(1.3 * c, 0.8, nu)), c * base, rtol=1e-15, atol=0)

    def test_array_shape_and_negative_lag(self):
        p = MaternParams(1.0, 1.0, 2.5)
        assert matern(np.zeros((3, 4)), p).shape == (3, 4)
        with pytest.raises(ValidationError):
            matern(-1e-9, p)

    def test_nugget_jumps_at_origin(self):
        p = MaternParams(1.0, 1.0, 1.5, nugget=0.2)
        assert matern(0.0, p) == 0.0
        assert matern(1e-12, p) == pytest.approx(0.2)


class TestPairwise:
    def test_equal_curves(self):
        c = gaussian_quantile_curve(0.1, 0.4, QuantileGrid(9))
        np.testing.assert_array_equal(pairwise_squared_w2([c, c, c]), np.zeros((3, 3)))

    def test_diracs(self):
        g = QuantileGrid(5)
        sq = pairwise_squared_w2([QuantileCurve(g, np.zeros(5)), QuantileCurve(g, np.full(5, 3.0))])
        np.testing.assert_allclose(sq, [[0, 9], [9, 0]], rtol=1e-15)

    def test_gaussian_closed_form(self):
        g = QuantileGrid(1000)
        params = [(0.0, 1.0), (1.5, 0.3), (-0.7, 2.5)]
        sq = pairwise_squared_w2([gaussian_quantile_curve(m, v, g) for m, v in params])
        for (i, (m1, v1)), (j, (m2, v2)) in itertools.combinations(enumerate(params), 2):
            ref = (m1 - m2) ** 2 + (math.sqrt(v1) - math.sqrt(v2)) ** 2
            assert abs(sq[i, j] - ref) <= 0.02 * ref
            assert sq[i, j] == sq[j, i]

    def test_grid_mismatch(self):
        with pytest.raises(ValidationError, match="grid mismatch"):
            pairwise_squared_w2([QuantileCurve(QuantileGrid(2), [0, 1]), QuantileCurve(QuantileGrid(3), [0, 1, 2])])


def brute_variogram(locs, sq, edges):
    out = []
    for b in range(len(edges) - 1):
        pairs = [(i, j) for i in range(len(locs)) for j in range(len(locs))
                 if i != j and edges[b] <= np.linalg.norm(locs[i] - locs[j]) < edges[b + 1]]
        if pairs:
            out.append((0.5 * (edges[b] + edges[b + 1]),
                        sum(sq[i][j] for i, j in pairs) / (2 * len(pairs)), len(pairs)))
    return out


class TestEmpiricalVariogram:
    def test_two_points(self):
        bins = BinSpec([0.0, 2.0])
        emp = empirical_variogram([[0.0], [1.5]], [[0, 4.0], [4.0, 0]], bins)
        assert list(emp.rows()) == [(1.0, 2.0, 2)]

    def test_equal_observations(self):
        locs = np.array([[0.0], [1.0], [2.5], [3.0]])
        emp = empirical_variogram(locs, scalar_squared_differences([2.0] * 4), make_bins(3, 4.0))
        assert np.all(emp.gamma == 0)

    def test_collinear_hand_enumeration(self):
        locs = np.array([[0.0], [1.0], [2.0]])
        y = [1.0, 3.0, 4.0]
        emp = empirical_variogram(locs, scalar_squared_differences(y), BinSpec([0.5, 1.5, 2.5]))
        # lag 1: pairs (0,1),(1,0),(1,2),(2,1) -> (4+4+1+1)/(2*4); lag 2: (0,2),(2,0) -> 18/4
        assert list(emp.rows()) == [(1.0, 10 / 8, 4), (2.0, 18 / 4, 2)]

    def test_matches_brute_force(self, rng):
        for _ in range(20):
            n = int(rng.integers(2, 12))
            locs = rng.uniform(0, 1, size=(n, 2))
            y = rng.normal(size=n)
            edges = np.sort(rng.uniform(0, 1.2, size=int(rng.integers(2, 7))))
            if np.any(np.diff(edges) <= 0):
                continue
            sq = scalar_squared_differences(y)
            ref = brute_variogram(locs, sq, edges)
            if not ref:
                with pytest.raises(ValidationError, match="no pairs in range"):
                    empirical_variogram(locs, sq, BinSpec(edges))
                continue
            got = list(empirical_variogram(locs, sq, BinSpec(edges)).rows())
            assert [r[2] for r in got] == [r[2] for r in ref]
            np.testing.assert_allclose([r[:2] for r in got], [r[:2] for r in ref], rtol=1e-12)

    def test_half_open_bins(self):
        locs = np.array([[0.0], [1.0]])
        with pytest.raises(ValidationError, match="no pairs in range"):
            empirical_variogram(locs, scalar_squared_differences([0, 1]), BinSpec([0.0, 1.0]))
        emp = empirical_variogram(locs, scalar_squared_differences([0, 1]), BinSpec([1.0, 2.0]))
        assert emp.pair_counts.tolist() == [2]

    def test_duplicate_locations(self):
        with pytest.raises(ValidationError, match="duplicate locations"):
            empirical_variogram([[0.0], [0.0]], np.zeros((2, 2)), BinSpec([0.0, 1.0]))

    @settings(max_examples=30, deadline=None)
    @given(st.integers(3, 10), st.integers(0, 10_000))
    def test_permutation_invariance(self, n, seed):
        rng = np.random.default_rng(seed)
        locs = rng.uniform(0, 1, size=(n, 2))
        y = rng.normal(size=n)
        bins = make_bins(4, locations=np.vstack([locs, [[0, 0], [1, 1]]]))
        perm = rng.permutation(n)
        try:
            a = empirical_variogram(locs, scalar_squared_differences(y), bins)
        except ValidationError:
            return
        b = empirical_variogram(locs[perm], scalar_squared_differences(y[perm]), bins)
        np.testing.assert_array_equal(a.pair_counts, b.pair_counts)
        np.testing.assert_allclose(a.gamma, b.gamma, rtol=1e-14)

    def test_scalar_and_dirac_agree(self, rng):
        g = QuantileGrid(16)
        for _ in range(10):
            n = 8
            locs = rng.uniform(0, 1, size=(n, 2))
            y = rng.integers(-20, 20, size=n).astype(float)
            bins = make_bins(5, locations=locs)
            a = empirical_variogram(locs, scalar_squared_differences(y), bins)
            b = empirical_variogram(locs, pairwise_squared_w2([QuantileCurve(g, np.full(16, v)) for v in y]), bins)
            np.testing.assert_array_equal(a.gamma, b.gamma)
            np.testing.assert_array_equal(a.pair_counts, b.pair_counts)

    def test_default_bins(self):
        bins = make_bins(locations=[[0, 0], [3, 4]])
        assert bins.count == 15 and bins.max_distance == 2.5
        np.testing.assert_allclose(bins.centers[:2], [2.5 / 30, 2.5 / 10])


def synthetic(params, n_bins=10, hmax=2.0):
    lags = np.linspace(hmax / n_bins, hmax, n_bins)
    return EmpiricalVariogram(lags, matern(lags, params), np.full(n_bins, 2))


class TestLeastSquares:
    @pytest.mark.parametrize("nu", NUS)
    def test_round_trip(self, nu):
        truth = MaternParams(1.7, 0.6, nu)
        grid = np.geomspace(0.05, 5, 200)
        grid = np.sort(np.append(grid, truth.length_scale))
        fit = fit_least_squares(synthetic(truth), nu, length_scale_grid=grid)
        assert fit.length_scale == truth.length_scale
        assert fit.sigma2 == pytest.approx(truth.sigma2, rel=1e-6)

    @pytest.mark.parametrize("nu", NUS)
    def test_round_trip_default_grid(self, nu):
        truth = MaternParams(1.7, 0.6, nu)
        fit = fit_least_squares(synthetic(truth), nu, return_details=True)
        step = fit.length_scale_grid[1] / fit.length_scale_grid[0]
        assert truth.length_scale / step <= fit.params.length_scale <= truth.length_scale * step

    def test_argmin_over_grid_brute_force(self, rng):
        emp = EmpiricalVariogram(np.linspace(0.1, 1, 8), rng.uniform(0.2, 1.5, 8), np.full(8, 4))
        grid = np.geomspace(0.01, 10, 60)
        fit = fit_least_squares(emp, 1.5, length_scale_grid=grid, return_details=True)

        def objective(s2, ls):
            p = MaternParams(s2, ls, 1.5)
            return sum((gb - matern(h, p)) ** 2 for h, gb in zip(emp.lags, emp.gamma))

        assert fit.objective == pytest.approx(objective(fit.params.sigma2, fit.params.length_scale), rel=1e-10)
        for ls in grid:
            # best sill for this length scale, found by a 1-D scan
            s2s = np.linspace(1e-3, 5, 2001)
            assert fit.objective <= min(objective(s, ls) for s in s2s[::40]) + 1e-12

    def test_constant_gamma_prefers_smallest_length_scale(self):
        c = 0.8
        emp = EmpiricalVariogram(np.linspace(0.5, 2, 6), np.full(6, c), np.full(6, 2))
        grid = np.geomspace(0.01, 10, 50)
        fit = fit_least_squares(emp, 2.5, length_scale_grid=grid, return_details=True)
        assert fit.params.length_scale == grid[0]
        assert fit.params.sigma2 == pytest.approx(c, rel=1e-9)
        assert np.all(np.diff(fit.objectives) >= -1e-15)

    def test_weighted_flag_uses_counts(self):
        emp = EmpiricalVariogram(np.array([0.5, 1.0, 1.5]), np.array([0.4, 0.9, 0.8]), np.array([2, 100, 2]))
        a = fit_least_squares(emp, 0.5, return_details=True)
        b = fit_least_squares(emp, 0.5, weighted=True, return_details=True)
        assert a.params != b.params

    def test_errors(self):
        one = EmpiricalVariogram(np.array([1.0, 1.0]), np.array([0.3, 0.3]), np.array([2, 2]))
        with pytest.raises(ValidationError, match="fewer than 2 points"):
            fit_least_squares(one, 1.5)
        zero = EmpiricalVariogram(np.array([1.0, 2.0]), np.zeros(2), np.array([2, 2]))
        with pytest.raises(ValidationError, match="zero variance data"):
            fit_least_squares(zero, 1.5)
