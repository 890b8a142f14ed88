import math

import numpy as np
import pytest
from scipy.special import ndtr
from sklearn.base import clone

from nmarsel.exceptions import ConfigError, DataError, DomainError, InsufficientDataError, PreconditionError
from nmarsel.estimators import (
    DirectionalKDE,
    EstimatorConfig,
    FourierGrids,
    LocalPolyConfig,
    LocalPolynomialRegressor,
    PropensityScore,
    directional_density,
    estimate_propensity,
    fourier_root,
    local_linear_nd,
    local_poly,
    mean_at_boundary,
    mean_by_integral,
    nonrespondent_cdf,
    raised_cosine,
    series_coefficients,
    uniform_hemisphere_density,
)
from nmarsel.models import (
    GaussianGroup,
    HeckmanParams,
    Law,
    RandomCoefficientSpec,
    ReparamSpec,
    linear_outcome,
    make_rng,
    normalize_instruments,
    simulate_heckman,
    simulate_random_coefficients,
    simulate_reparam,
)
from nmarsel.spherical import build_grid, geodesic_distance

CFG = EstimatorConfig(local=LocalPolyConfig(bandwidth=0.2), propensity_bandwidth=0.1)


def heckman(n, seed, rho=0.0, beta=0.0, gamma=(0.0, 1.0)):
    return simulate_heckman(HeckmanParams([beta], 1.0, list(gamma), rho), n, seed)


def rc_data(n, seed, mean_y=2.0):
    g = GaussianGroup(1.0, [0.3, 0.5, 0.0], [[1, 0, 0.6], [0, 1, 0.3], [0.6, 0.3, 1]])
    spec = RandomCoefficientSpec([g], z_law=Law("hemisphere", dim=1), outcome=linear_outcome(mean_y))
    return simulate_random_coefficients(spec, n, seed)


def shuffled(data, seed=0):
    return data.subset(make_rng(seed).permutation(data.n))


class TestLocalPoly:
    def test_reproduces_lines(self):
        x = np.linspace(0, 1, 500)
        vals, slopes = local_poly(x, 2 * x + 1, [0.2, 0.5, 0.8], LocalPolyConfig(0.07))
        np.testing.assert_allclose(vals, [1.4, 2.0, 2.6], atol=1e-12)
        np.testing.assert_allclose(slopes, 2.0, atol=1e-10)

    def test_quadratic_slope(self):
        x = np.linspace(0, 1, 10_000)
        _, slope = local_poly(x, x**2, [0.5], LocalPolyConfig(0.05))
        assert slope[0] == pytest.approx(1.0, abs=0.02)

    def test_constant(self):
        x = make_rng(1).uniform(size=300)
        vals, slopes = local_poly(x, np.full(300, 3.0), [0.3, 0.6], LocalPolyConfig(0.1))
        np.testing.assert_allclose(vals, 3.0, atol=1e-12)
        np.testing.assert_allclose(slopes, 0.0, atol=1e-10)

    def test_empty_window_is_widened_and_flagged(self):
        x = np.r_[np.linspace(0, 1, 100), np.linspace(3, 4, 100)]
        vals, _, flags = local_poly(x, 2 * x, [0.5, 2.0], LocalPolyConfig(0.1), return_flags=True)
        assert not flags[0] and flags[1]
        assert vals[1] == pytest.approx(4.0, abs=1e-8)

    def test_matrix_response(self):
        x = np.linspace(0, 1, 400)
        Y = np.column_stack([x, 1 - x])
        vals, slopes = local_poly(x, Y, [0.5], LocalPolyConfig(0.1))
        np.testing.assert_allclose(vals, [[0.5, 0.5]], atol=1e-12)
        np.testing.assert_allclose(slopes, [[1.0, -1.0]], atol=1e-10)

    def test_nd_plane(self):
        X = make_rng(2).uniform(-1, 1, size=(3000, 2))
        vals, grads, _ = local_linear_nd(X, 1 + 2 * X[:, 0] - X[:, 1], [[0.1, 0.2]], bandwidth=[0.3, 0.3])
        assert vals[0] == pytest.approx(1.0, abs=1e-10)
        np.testing.assert_allclose(grads[0], [2.0, -1.0], atol=1e-10)

    def test_config_validation(self):
        with pytest.raises(ConfigError):
            LocalPolyConfig(bandwidth=-1.0)
        with pytest.raises(ConfigError):
            LocalPolyConfig(degree=2)


class TestPropensity:
    def test_all_respond(self):
        z = make_rng(0).standard_normal(1000)
        np.testing.assert_array_equal(estimate_propensity(np.ones(1000), z, [-1.0, 0.0, 2.0]), 1.0)

    def test_independent_bernoulli(self):
        rng = make_rng(1)
        z = rng.standard_normal(50_000)
        r = rng.uniform(size=50_000) < 0.4
        p = estimate_propensity(r, z, [-0.5, 0.0, 0.5], LocalPolyConfig(0.3))
        np.testing.assert_allclose(p, 0.4, atol=0.03)

    def test_heckman_probit(self):
        data = heckman(100_000, 3, rho=0.5, gamma=(0.2, 0.8))
        z = data.z[:, 0]
        q = np.linspace(*np.quantile(z, [0.25, 0.75]), 50)
        p = estimate_propensity(data.r, z, q, LocalPolyConfig(0.1))
        assert np.max(np.abs(p - ndtr(0.2 + 0.8 * q))) < 0.03

    def test_in_unit_interval(self):
        rng = make_rng(4)
        Z = rng.standard_normal((2000, 2))
        r = rng.uniform(size=2000) < ndtr(Z[:, 0])
        p = estimate_propensity(r, Z, rng.standard_normal((50, 2)) * 3, LocalPolyConfig(0.5))
        assert np.all((p >= 0) & (p <= 1))


class TestSklearnWrappers:
    def test_regressor(self):
        rng = make_rng(5)
        X = rng.uniform(-1, 1, (2000, 1))
        y = 3 * X[:, 0] - 1
        m = LocalPolynomialRegressor(bandwidth=0.2).fit(X, y)
        np.testing.assert_allclose(m.predict([[0.0], [0.5]]), [-1.0, 0.5], atol=1e-10)
        np.testing.assert_allclose(m.gradient([[0.0]]), [[3.0]], atol=1e-10)
        assert m.score(X, y) == pytest.approx(1.0)
        assert clone(m).get_params() == {"bandwidth": 0.2, "degree": 1, "kernel": "epanechnikov"}

    def test_regressor_rejects_bad_input(self):
        with pytest.raises(ValueError):
            LocalPolynomialRegressor().fit([[1.0], [np.nan]], [1.0, 2.0])
        m = LocalPolynomialRegressor(0.5).fit(np.ones((5, 2)) * np.arange(5)[:, None], np.arange(5.0))
        with pytest.raises(ValueError):
            m.predict([[1.0]])

    def test_propensity_score(self):
        rng = make_rng(6)
        z = rng.standard_normal((20_000, 1))
        r = (rng.uniform(size=20_000) < ndtr(z[:, 0])).astype(int)
        ps = PropensityScore(bandwidth=0.2).fit(z, r)
        assert ps.predict([[0.0]])[0] == pytest.approx(0.5, abs=0.04)
        assert ps.fit_transform(z, r).shape == (20_000, 1)
        with pytest.raises(ValueError):
            PropensityScore().fit(z, r + 1)

    def test_kde_params(self):
        k = DirectionalKDE(bandwidth=0.2, support="sphere")
        assert clone(k).get_params()["bandwidth"] == 0.2


class TestMeanByIntegral:
    def test_mar_case(self):
        est = [mean_by_integral(heckman(20_000, s, beta=1.5), "identity", CFG).value for s in range(6)]
        se = np.std(est, ddof=1) / math.sqrt(len(est))
        assert abs(np.mean(est) - 1.5) < 3 * se + 1e-3

    def test_endpoint_form_agrees(self):
        reps = [mean_by_integral(heckman(20_000, s, rho=0.5), "identity", CFG) for s in range(6)]
        sd = np.std([r.value for r in reps], ddof=1)
        for r in reps:
            assert abs(r.value - r.details["endpoint"]) < 2 * sd

    def test_indicator_below_support(self):
        assert mean_by_integral(heckman(5000, 1), ("indicator", -50.0), CFG).value == 0.0

    def test_flag_when_support_misses_one(self):
        data = heckman(20_000, 2, gamma=(-1.0, 0.3))
        with pytest.warns(RuntimeWarning, match="unreliable"):
            m = mean_by_integral(data, "identity", CFG)
        assert m.flags["at_infinity_unreliable"] is True
        m = mean_by_integral(heckman(20_000, 2), "identity", CFG)
        assert m.flags["at_infinity_unreliable"] is False

    def test_known_propensity(self):
        data = heckman(20_000, 3, beta=1.0)
        m = mean_by_integral(data, "identity", CFG, propensity=lambda z: ndtr(z[:, 0]))
        assert m.value == pytest.approx(1.0, abs=0.1)

    def test_permutation_invariant(self):
        data = heckman(3000, 4, rho=0.6)
        assert mean_by_integral(data, "identity", CFG).value == mean_by_integral(shuffled(data), "identity", CFG).value


class TestMeanAtBoundary:
    CFG = EstimatorConfig(local=LocalPolyConfig(bandwidth=0.1))

    def test_symmetric_design(self):
        g0 = GaussianGroup(1.0, [0, 0, 0], np.eye(3).tolist())
        spec = RandomCoefficientSpec([g0], z_law=Law("hemisphere", dim=1))
        est = [mean_at_boundary(simulate_random_coefficients(spec, 20_000, s), "one", None, self.CFG).value for s in range(5)]
        se = np.std(est, ddof=1) / math.sqrt(len(est))
        assert abs(np.mean(est) - 1.0) < 3 * se + 0.01

    def test_nonnegative_phi(self):
        data = rc_data(20_000, 1)
        assert mean_at_boundary(data, ("indicator", 2.0), None, self.CFG).value >= -0.05

    def test_starved_side_is_named(self):
        data = rc_data(20_000, 2)
        keep = np.flatnonzero(normalize_instruments(data.z)[:, 1] > -0.5)
        cfg = EstimatorConfig(local=LocalPolyConfig(bandwidth=0.1), min_points=30)
        with pytest.raises(InsufficientDataError, match="-s_tilde"):
            mean_at_boundary(data.subset(keep), "one", None, cfg)

    def test_bad_direction(self):
        with pytest.raises(DomainError):
            mean_at_boundary(rc_data(2000, 3), "one", [1.0, 0.0], self.CFG)

    def test_permutation_invariant(self):
        data = rc_data(5000, 4)
        a = mean_at_boundary(data, "identity", None, self.CFG).value
        assert a == mean_at_boundary(shuffled(data), "identity", None, self.CFG).value


class TestDirectional:
    @pytest.mark.parametrize("d", [2, 3])
    def test_uniform_half_sphere(self, d):
        z = Law("hemisphere", dim=d - 1).sample(make_rng(1), 100_000)
        f = directional_density(normalize_instruments(z))
        inside = f.grid.nodes[:, 0] > 0
        assert f.integral() == pytest.approx(1.0, abs=1e-3)
        assert np.max(np.abs(f.values[inside] / uniform_hemisphere_density(d) - 1)) < 0.1
        assert np.all(f.values[~inside] == 0)

    def test_point_mass_mode(self):
        s0 = np.array([0.6, 0.8, 0.0])
        f = directional_density(np.tile(s0, (50, 1)), 0.1)
        assert geodesic_distance(f.grid.nodes[np.argmax(f.values)], s0) < 0.1

    def test_full_sphere_support(self):
        pts = make_rng(2).standard_normal((5000, 3))
        pts /= np.linalg.norm(pts, axis=1, keepdims=True)
        k = DirectionalKDE(0.3, support="sphere").fit(pts)
        assert k.to_function().integral() == pytest.approx(1.0, abs=1e-3)
        assert np.all(np.isfinite(k.score_samples(pts[:10])))

    def test_rejects_non_unit(self):
        with pytest.raises(DataError):
            directional_density(np.array([[1.0, 1.0]]))


@pytest.fixture(scope="module")
def series_data():
    g0 = np.array([0.5, 0.6, -0.62])
    g0 /= np.linalg.norm(g0)
    cov = np.diag([0.04, 0.04, 0.04, 1.0])
    spec = RandomCoefficientSpec([GaussianGroup(1.0, list(g0) + [0.0], cov.tolist())], z_law=Law("hemisphere", dim=2))
    return simulate_random_coefficients(spec, 20_000, 3), g0


class TestSeries:

    def test_structure(self, series_data):
        ds, _ = series_data
        est = series_coefficients(ds, "one", build_grid(3, 16), 3, mean_estimate=1.0)
        grid = est.gamma_grid
        assert est.coefficients.shape == (4, grid.size)
        assert np.max(np.abs(est.root.values + est.root.values[grid.antipode])) < 1e-8
        rec = est.reconstructed.values
        assert np.all(rec >= 0)
        assert np.all(rec[grid.antipode][rec > 0] == 0)

    def test_truncation_zero(self, series_data):
        est = series_coefficients(series_data[0], "one", build_grid(3, 16), 0, mean_estimate=1.0)
        assert est.coefficients.shape[0] == 1

    def test_mode_near_planted_direction(self, series_data):
        ds, g0 = series_data
        est = series_coefficients(ds, "one", build_grid(3, 16), 5, mean_estimate=1.0)
        assert geodesic_distance(est.mode(), g0) < 0.3

    def test_permutation_invariant(self, series_data):
        ds = series_data[0].subset(np.arange(4000))
        a = series_coefficients(ds, "one", build_grid(3, 8), 2, mean_estimate=1.0)
        b = series_coefficients(shuffled(ds), "one", build_grid(3, 8), 2, mean_estimate=1.0)
        np.testing.assert_array_equal(a.coefficients, b.coefficients)

    def test_density_floor_drops_are_counted(self, series_data):
        cfg = EstimatorConfig(density_floor=0.99)
        with pytest.warns(RuntimeWarning, match="density floor"):
            est = series_coefficients(series_data[0], "one", build_grid(3, 8), 1, mean_estimate=1.0, config=cfg)
        assert est.diagnostics["dropped"] > 0


def projected_normal_density(nodes, mean, sd):
    # law of X / |X| for X ~ N(mean, sd^2 I_3), by radial quadrature
    r = np.linspace(0.0, 1.0 + 8 * sd, 4001)
    sq = np.sum((r[None, :, None] * nodes[:, None, :] - mean) ** 2, axis=2)
    dens = r**2 * np.exp(-sq / (2 * sd**2)) / ((2 * np.pi) ** 1.5 * sd**3)
    return np.trapezoid(dens, r, axis=1)


def test_series_separable_outcome():
    # Y independent of Gamma and phi = id: the root is E[Y] f_Gamma
    g0 = np.array([0.5, 0.6, -0.62])
    g0 /= np.linalg.norm(g0)
    cov = np.diag([0.04, 0.04, 0.04, 1.0])
    spec = RandomCoefficientSpec(
        [GaussianGroup(1.0, list(g0) + [0.0], cov.tolist())], z_law=Law("hemisphere", dim=2), outcome=linear_outcome(2.0)
    )
    data = simulate_random_coefficients(spec, 100_000, 3)
    grid = build_grid(3, 32)
    est = series_coefficients(data, "identity", grid, 7, mean_estimate=2.0)
    target = 2.0 * projected_normal_density(grid.nodes, g0, 0.2)
    assert grid.integrate(target) == pytest.approx(2.0, abs=1e-3)
    err = np.sqrt(grid.integrate((est.reconstructed.values - target) ** 2) / grid.integrate(target**2))
    assert err < 0.15


class TestNonrespondentCDF:
    def test_proper_cdf(self):
        data = heckman(20_000, 1, rho=0.8)
        F = nonrespondent_cdf(data, np.linspace(-8, 8, 161), "threshold", CFG)
        assert np.all(np.diff(F.values) >= 0)
        assert np.all((F.values >= 0) & (F.values <= 1))
        assert F.values[0] == pytest.approx(0.0, abs=1e-3)
        assert F.values[-1] == pytest.approx(1.0, abs=1e-3)
        assert F(-1e9) == 0.0 and F(1e9) == 1.0

    def test_exogenous_matches_respondents(self):
        data = heckman(100_000, 2)
        F = nonrespondent_cdf(data, None, "threshold", CFG)
        resp = np.sort(data.y[data.r == 1])
        ecdf = np.searchsorted(resp, F.t_grid, side="right") / resp.size
        assert np.max(np.abs(F.values - ecdf)) < 0.05

    def test_heckman_direction(self):
        # with R = 1{Z'gamma > E_R} and rho > 0 the nonrespondents have larger E_Y
        data = heckman(100_000, 3, rho=0.8)
        F = nonrespondent_cdf(data, None, "threshold", CFG)
        resp = np.sort(data.y[data.r == 1])
        ecdf = np.searchsorted(resp, F.t_grid, side="right") / resp.size
        assert np.all(F.values <= ecdf + 0.03)

    def test_requires_nonrespondents(self):
        data = heckman(5000, 4, gamma=(5.0, 0.0))
        with pytest.raises(PreconditionError, match="no nonrespondents"):
            nonrespondent_cdf(data, None, "respondents", CFG)

    def test_quantile_is_generalised_inverse(self):
        data = heckman(20_000, 5, rho=0.5)
        F = nonrespondent_cdf(data, None, "threshold", CFG)
        u = np.linspace(0.01, 0.99, 50)
        q = F.quantile(u)
        assert np.all(np.diff(q) >= 0)
        assert np.all(F(q) >= u - 1e-9)

    def test_permutation_invariant(self):
        data = heckman(4000, 6, rho=0.5)
        a = nonrespondent_cdf(data, None, "threshold", CFG)
        b = nonrespondent_cdf(shuffled(data), None, "threshold", CFG)
        np.testing.assert_array_equal(a.values, b.values)

    def test_unknown_method(self):
        with pytest.raises(DomainError):
            nonrespondent_cdf(heckman(1000, 7), None, "magic", CFG)


def reparam(n, seed, cov_gbar=0.25, corr=0.15):
    cov = np.zeros((3, 3))
    cov[:2, :2] = [[1.0, corr], [corr, cov_gbar]]
    cov[2, 2] = 1.0
    spec = ReparamSpec([GaussianGroup(1.0, [0.0, 0.5, 0.0], cov.tolist())])
    return simulate_reparam(spec, n, seed)


class TestFourier:
    FCFG = EstimatorConfig(local=LocalPolyConfig(bandwidth=(0.6, 0.4)))

    def test_window(self):
        r = np.array([0.0, 2.0, 5.0, 7.9, 8.0, 9.0])
        w = raised_cosine(r, 8.0, 0.5)
        assert w[0] == 1.0 and w[1] == 1.0 and w[-1] == 0.0 and w[-2] == 0.0
        np.testing.assert_allclose(raised_cosine(r, 8.0, 1.0), np.where(r < 8, 0.5 * (1 + np.cos(np.pi * r / 8)), 0))

    def test_zero_frequency_slice_and_mass(self):
        est = fourier_root(reparam(50_000, 1), "one", None, 4.0, self.FCFG)
        assert np.std(est.slice_s0) < 0.05
        assert np.mean(est.slice_s0) == pytest.approx(1.0, abs=0.05)
        assert est.integral() == pytest.approx(1.0, abs=0.05)
        assert est.diagnostics["imag_residue"] < 1e-6

    def test_degenerate_gbar(self):
        est = fourier_root(reparam(50_000, 2, cov_gbar=0.0, corr=0.0), "one", None, 4.0, self.FCFG)
        # mass sits near gbar = 0.5, the point mass of Gbar
        marginal = np.trapezoid(est.values, est.theta, axis=0)
        assert abs(est.gbar[np.argmax(marginal)] - 0.5) <= 0.2

    def test_grid_too_small(self):
        with pytest.raises(ConfigError, match="zeta"):
            fourier_root(reparam(2000, 3), "one", FourierGrids(zeta_max=1.0), 4.0, self.FCFG)

    def test_needs_two_instruments(self):
        with pytest.raises(DomainError):
            fourier_root(heckman(1000, 1), "one", None, 4.0, self.FCFG)

    def test_permutation_invariant(self):
        data = reparam(5000, 4)
        g = FourierGrids(n_s=33, n_zeta=33)
        a = fourier_root(data, "one", g, 3.0, self.FCFG)
        b = fourier_root(shuffled(data), "one", g, 3.0, self.FCFG)
        np.testing.assert_array_equal(a.values, b.values)


def test_estimator_config_from_dict():
    cfg = EstimatorConfig.from_dict({"local": {"bandwidth": [0.1, 0.2]}, "x_cell": 1})
    assert cfg.local.bandwidth == (0.1, 0.2)
    assert cfg.x_cell == (1,)
    with pytest.raises(ConfigError):
        EstimatorConfig.from_dict({"bogus": 1})


def test_x_cell_filters_units():
    data = simulate_heckman(HeckmanParams([0.0, 1.0], 1.0, [0.0, 1.0], 0.0, x_law=Law("uniform", low=0, high=1)), 4000, 1)
    data.x[:] = np.round(data.x)
    y_one = mean_by_integral(data, "identity", EstimatorConfig(local=LocalPolyConfig(0.2), x_cell=(1.0,))).value
    y_zero = mean_by_integral(data, "identity", EstimatorConfig(local=LocalPolyConfig(0.2), x_cell=(0.0,))).value
    assert y_one - y_zero == pytest.approx(1.0, abs=0.35)
