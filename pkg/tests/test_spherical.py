import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from numpy.polynomial.legendre import leggauss
from scipy import integrate, special

from nmarsel.exceptions import CapabilityError, DomainError
from nmarsel.spherical import (
    GegenbauerBasis,
    SeriesCoefficients,
    build_grid,
    build_hemisphere_grid,
    gegenbauer_eval,
    geodesic_distance,
    hemisphere_q_integral,
    lambda_coeff,
    q_eval,
    sphere_area,
)


def test_sphere_area():
    assert sphere_area(1) == pytest.approx(2.0)
    assert sphere_area(2) == pytest.approx(2 * math.pi)
    assert sphere_area(3) == pytest.approx(4 * math.pi)


class TestGegenbauer:
    def test_examples(self):
        assert gegenbauer_eval(GegenbauerBasis(3, 5), 1, 0.4) == pytest.approx(0.4, abs=1e-15)
        assert gegenbauer_eval(GegenbauerBasis(3, 5), 2, 1.0) == pytest.approx(1.0, abs=1e-15)
        assert gegenbauer_eval(GegenbauerBasis(2, 5), 1, 0.25) == pytest.approx(0.5, abs=1e-15)

    def test_low_degrees(self):
        for d in (2, 3, 4):
            b = GegenbauerBasis(d, 3)
            mu = (d - 2) / 2
            assert gegenbauer_eval(b, 0, 0.3) == 1.0
            expected = 0.6 if d == 2 else 2 * mu * 0.3
            assert gegenbauer_eval(b, 1, 0.3) == pytest.approx(expected)

    @pytest.mark.parametrize("d", [3, 4, 5])
    def test_matches_scipy(self, d):
        t = np.linspace(-1, 1, 41)
        b = GegenbauerBasis(d, 12)
        for k in range(13):
            np.testing.assert_allclose(gegenbauer_eval(b, k, t), special.eval_gegenbauer(k, (d - 2) / 2, t), atol=1e-12)

    def test_mu_zero_is_scaled_chebyshev(self):
        t = np.linspace(-1, 1, 41)
        b = GegenbauerBasis(2, 12)
        for k in range(1, 13):
            np.testing.assert_allclose(gegenbauer_eval(b, k, t), 2.0 / k * special.eval_chebyt(k, t), atol=1e-12)

    def test_errors(self):
        with pytest.raises(CapabilityError):
            gegenbauer_eval(GegenbauerBasis(3, 2), 3, 0.1)
        with pytest.raises(DomainError):
            gegenbauer_eval(GegenbauerBasis(3, 2), 1, 1.5)

    def test_orthogonality_d3(self):
        x, w = leggauss(64)
        b = GegenbauerBasis(3, 10)
        C = np.array([gegenbauer_eval(b, k, x) for k in range(11)])
        gram = (C * w) @ C.T
        off = gram - np.diag(np.diag(gram))
        assert np.max(np.abs(off)) < 1e-8

    @given(st.integers(2, 3), st.integers(0, 20), st.floats(-1, 1))
    def test_finite(self, d, k, t):
        assert np.isfinite(gegenbauer_eval(GegenbauerBasis(d, 20), k, t))


class TestQ:
    def test_examples(self):
        b = GegenbauerBasis(3, 5)
        for t in (-0.7, 0.2, 0.9):
            assert q_eval(b, 1, t) == pytest.approx(3 * t / (4 * math.pi), abs=1e-12)
        assert q_eval(b, 1, 0.0) == 0.0
        assert q_eval(b, 3, 1.0) == pytest.approx(7 / (4 * math.pi), abs=1e-12)

    def test_even_degree_rejected(self):
        with pytest.raises(DomainError):
            q_eval(GegenbauerBasis(3, 5), 2, 0.1)

    @pytest.mark.parametrize("d", [2, 3])
    def test_reproducing_value_at_one(self, d):
        b = GegenbauerBasis(d, 21)
        for k in range(1, 22, 2):
            if d == 2:
                L = 2
            else:
                L = 2 * k + 1
            assert q_eval(b, k, 1.0) == pytest.approx(L / sphere_area(d), rel=1e-13)

    def test_reproducing_kernel_d3(self):
        # q_{k,3}(t) = (2k+1) P_k(t) / (4 pi)
        t = np.linspace(-1, 1, 11)
        b = GegenbauerBasis(3, 9)
        for k in (1, 3, 5, 7, 9):
            np.testing.assert_allclose(q_eval(b, k, t), (2 * k + 1) * special.eval_legendre(k, t) / (4 * math.pi), atol=1e-13)


class TestLambda:
    def test_examples(self):
        assert lambda_coeff(3, 0) == pytest.approx(math.pi, abs=1e-12)
        assert lambda_coeff(3, 1) == pytest.approx(-math.pi / 4, abs=1e-12)
        assert lambda_coeff(2, 0) == pytest.approx(2.0, abs=1e-12)

    @pytest.mark.parametrize("d", [2, 3])
    def test_alternating_and_decreasing(self, d):
        vals = SeriesCoefficients.compute(d, 10).values
        assert np.all(np.sign(vals) == (-1.0) ** np.arange(11))
        assert np.all(np.diff(np.abs(vals)) < 0)

    @pytest.mark.parametrize("d", [2, 3])
    def test_eigenvalue_oracle(self, d):
        # Funk-Hecke: lambda_k = |S^{d-2}| int_0^1 C_k(t)/C_k(1) (1 - t^2)^{(d-3)/2} dt
        mu = (d - 2) / 2
        for p in range(6):
            k = 2 * p + 1
            if d == 2:
                f = lambda t: special.eval_chebyt(k, t) / np.sqrt(1 - t * t)
            else:
                f = lambda t: special.eval_gegenbauer(k, mu, t) / special.eval_gegenbauer(k, mu, 1.0)
            val, _ = integrate.quad(f, 0, 1, limit=200)
            assert lambda_coeff(d, p) == pytest.approx(sphere_area(d - 1) * val, rel=1e-8)


class TestGrid:
    def test_circle(self):
        g = build_grid(2, 360)
        assert g.size == 360
        np.testing.assert_allclose(g.weights, 2 * math.pi / 360)

    @pytest.mark.parametrize("d,res", [(2, 8), (2, 101), (3, 8), (3, 64)])
    def test_weights_and_norms(self, d, res):
        g = build_grid(d, res)
        assert abs(g.weights.sum() - sphere_area(d)) < 1e-10
        assert np.max(np.abs(np.linalg.norm(g.nodes, axis=1) - 1)) < 1e-12
        assert g.integrate(np.ones(g.size)) == pytest.approx(sphere_area(d), abs=1e-10)

    def test_antipodal_closure(self):
        for d, res in ((2, 64), (3, 16)):
            g = build_grid(d, res)
            assert g.antipodal_closed
            np.testing.assert_allclose(g.nodes[g.antipode], -g.nodes, atol=1e-12)

    def test_polynomial_exactness_d3(self):
        g = build_grid(3, 32)
        x, y, z = g.nodes.T
        # moments of the uniform law on S^2: E[x^2] = 1/3, E[x^2 y^2] = 1/15, E[x^4] = 1/5
        area = 4 * math.pi
        assert g.integrate(x**2) == pytest.approx(area / 3, abs=1e-8)
        assert g.integrate(x**2 * y**2) == pytest.approx(area / 15, abs=1e-8)
        assert g.integrate(z**4) == pytest.approx(area / 5, abs=1e-8)
        for mono in (x, x * y * z, x**3 * y**2, y**5, x * y):
            assert abs(g.integrate(mono)) < 1e-8

    def test_errors(self):
        with pytest.raises(CapabilityError):
            build_grid(4, 16)
        with pytest.raises(DomainError):
            build_grid(3, 4)

    def test_hemisphere_grid(self):
        for d in (2, 3):
            g = build_hemisphere_grid(d, 32)
            assert np.all(g.nodes[:, 0] >= 0)
            assert g.weights.sum() == pytest.approx(sphere_area(d) / 2, abs=1e-10)


class TestHemisphereQ:
    def test_examples_d3(self):
        g = build_grid(3, 64)
        assert hemisphere_q_integral(3, 0, [1.0, 0.0, 0.0], g) == pytest.approx(0.75, abs=2e-3)
        h = build_hemisphere_grid(3, 64)
        assert hemisphere_q_integral(3, 0, [1.0, 0.0, 0.0], h) == pytest.approx(0.75, abs=1e-12)
        assert abs(hemisphere_q_integral(3, 0, [0.0, 0.6, 0.8], h)) < 1e-12
        assert abs(hemisphere_q_integral(3, 0, [0.0, 0.6, 0.8], g)) < 1e-12

    @pytest.mark.parametrize("p", [0, 1, 2])
    def test_d2_against_angle_quadrature(self, p):
        b = GegenbauerBasis(2, 2 * p + 1)
        oracle, _ = integrate.quad(lambda phi: q_eval(b, 2 * p + 1, math.cos(phi)), -math.pi / 2, math.pi / 2)
        h = build_hemisphere_grid(2, 64)
        assert hemisphere_q_integral(2, p, [1.0, 0.0], h) == pytest.approx(oracle, abs=1e-12)

    def test_rejects_non_unit(self):
        with pytest.raises(DomainError):
            hemisphere_q_integral(3, 0, [1.0, 1.0, 0.0], build_grid(3, 16))


@settings(max_examples=50)
@given(st.floats(-math.pi, math.pi), st.floats(-math.pi, math.pi))
def test_geodesic_distance_circle(a, b):
    u = np.array([math.cos(a), math.sin(a)])
    v = np.array([math.cos(b), math.sin(b)])
    diff = abs(a - b) % (2 * math.pi)
    assert geodesic_distance(u, v) == pytest.approx(min(diff, 2 * math.pi - diff), abs=1e-6)
