import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from numpy.testing import assert_allclose
from scipy import integrate
from scipy.special import beta as beta_fn
from scipy.special import eval_gegenbauer

from steklov_perturb.sphere_basis import (
    CapacityError,
    ZonalFn,
    analyze,
    apply_lb,
    grad_dot,
    harmonic_dim,
    lb_eigenvalue,
    make_quadrature,
    multiply,
    rule_for_degree,
    sobolev_norm,
    synthesize,
    zonal_basis,
    zonal_basis_dtheta,
)


def quad_inner(d, f, g, order=0):
    """``int_0^pi f g sin^{d-1}`` by adaptive quadrature (independent of the Gauss rule)."""
    val, _ = integrate.quad(lambda t: f(t) * g(t) * np.sin(t) ** (d - 1), 0.0, np.pi,
                            epsabs=1e-13, epsrel=1e-12, limit=200)
    return val


def harmonic_dim_by_rank(d, ell):
    """Count harmonic homogeneous polynomials of degree ``ell`` in ``d + 1`` variables."""
    n = d + 1
    monos = [m for m in itertools.product(range(ell + 1), repeat=n) if sum(m) == ell]
    if ell < 2:
        return len(monos)
    target = {m: i for i, m in enumerate(
        m for m in itertools.product(range(ell - 1), repeat=n) if sum(m) == ell - 2)}
    lap = np.zeros((len(target), len(monos)))
    for j, m in enumerate(monos):
        for i in range(n):
            if m[i] >= 2:
                t = list(m)
                t[i] -= 2
                lap[target[tuple(t)], j] += m[i] * (m[i] - 1)
    return len(monos) - np.linalg.matrix_rank(lap)


class TestCounting:
    @pytest.mark.parametrize("d,ell,expected", [(3, 2, 8.0), (2, 1, 2.0), (5, 0, 0.0)])
    def test_lb_eigenvalue(self, d, ell, expected):
        assert lb_eigenvalue(d, ell) == expected

    @pytest.mark.parametrize("d,ell,expected", [(2, 3, 7), (3, 1, 4), (4, 2, 14)])
    def test_harmonic_dim_examples(self, d, ell, expected):
        assert harmonic_dim(d, ell) == expected

    @pytest.mark.parametrize("d,ell", [(2, 4), (3, 3), (4, 2), (4, 3), (5, 2)])
    def test_harmonic_dim_matches_kernel_of_laplacian(self, d, ell):
        assert harmonic_dim(d, ell) == harmonic_dim_by_rank(d, ell)

    def test_negative_degree_rejected(self):
        with pytest.raises(ValueError):
            harmonic_dim(3, -1)


class TestQuadrature:
    def test_single_node(self):
        rule = make_quadrature(2, 1)
        assert_allclose(rule.theta, [np.pi / 2], atol=1e-15)
        assert_allclose(rule.weights, [2.0], rtol=1e-15)

    def test_total_mass_d3(self):
        assert_allclose(make_quadrature(3, 2).weights.sum(), np.pi / 2, rtol=1e-14)

    def test_d4_monomial_against_adaptive(self):
        rule = make_quadrature(4, 8)
        f = lambda t: np.cos(t) ** 6
        exact, _ = integrate.quad(lambda t: f(t) * np.sin(t) ** 3, 0, np.pi, epsabs=1e-15)
        assert abs(rule.integrate(f(rule.theta)) - exact) < 1e-13
        assert_allclose(exact, 4.0 / 63.0, rtol=1e-13)

    @settings(max_examples=40, deadline=None)
    @given(d=st.integers(2, 7), n=st.integers(1, 12), k=st.integers(0, 23))
    def test_exact_on_moments(self, d, n, k):
        if k > 2 * n - 1:
            k = k % (2 * n)
        rule = make_quadrature(d, n)
        # int_{-1}^{1} x^k (1 - x^2)^{(d-2)/2} dx
        exact = 0.0 if k % 2 else beta_fn((k + 1) / 2, d / 2)
        assert abs(rule.integrate(rule.x**k) - exact) < 1e-13 * max(1.0, abs(exact))

    def test_rule_for_degree(self):
        assert rule_for_degree(3, 0).n == 1
        assert rule_for_degree(3, 9).exactness >= 9

    def test_capacity_cap_from_env(self, monkeypatch):
        make_quadrature(3, 6)
        monkeypatch.setenv("STEKLOV_MAX_QUAD", "5")
        with pytest.raises(CapacityError):
            make_quadrature(3, 6)

    def test_invalid_dimension(self):
        with pytest.raises(ValueError):
            make_quadrature(1, 3)


class TestBasis:
    @pytest.mark.parametrize("d", [2, 3, 4, 5, 6])
    def test_gegenbauer_proportionality(self, d):
        lam = (d - 1) / 2
        x = np.linspace(-0.95, 0.95, 7)
        Z = zonal_basis(d, 6, x)
        for ell in range(7):
            C = eval_gegenbauer(ell, lam, x)
            scale = (Z[ell] @ C) / (C @ C)
            assert_allclose(Z[ell], scale * C, atol=1e-12 * np.abs(Z[ell]).max())

    @pytest.mark.parametrize("d", [2, 5])
    def test_orthonormal_by_adaptive_quadrature(self, d):
        for i, j in [(0, 0), (3, 3), (2, 4), (5, 1)]:
            fi = lambda t, i=i: zonal_basis(d, i, np.cos(t))[i]
            fj = lambda t, j=j: zonal_basis(d, j, np.cos(t))[j]
            assert abs(quad_inner(d, fi, fj) - (i == j)) < 1e-12

    def test_dtheta_against_finite_difference(self):
        theta = np.linspace(0.3, 2.8, 9)
        h = 1e-6
        for d in (2, 4):
            fd = (zonal_basis(d, 8, np.cos(theta + h)) - zonal_basis(d, 8, np.cos(theta - h))) / (2 * h)
            assert_allclose(zonal_basis_dtheta(d, 8, theta), fd, atol=1e-7)

    def test_analyze_constant(self):
        rule = make_quadrature(3, 6)
        f = analyze(rule, np.ones(rule.n))
        expected = np.zeros(6)
        expected[0] = math.sqrt(np.pi / 2)
        assert_allclose(f.coeffs, expected, atol=1e-14)

    def test_analyze_basis_function(self):
        rule = make_quadrature(4, 10)
        f = analyze(rule, rule.basis(5)[5])
        assert_allclose(f.coeffs, np.eye(10)[5], atol=1e-13)

    @pytest.mark.parametrize("d", [2, 3, 6])
    def test_round_trip_seeded(self, d, rng):
        c = rng.standard_normal(8)
        rule = make_quadrature(d, 8)
        back = analyze(rule, synthesize(ZonalFn(d, c), rule), 7)
        assert_allclose(back.coeffs, c, atol=1e-12)

    def test_synthesize_over_capacity(self):
        with pytest.raises(CapacityError):
            synthesize(ZonalFn.basis_fn(3, 5), make_quadrature(3, 5))


class TestProducts:
    def test_multiply_zero(self):
        g = ZonalFn(3, [0.2, 1.0, -0.5])
        assert np.all(multiply(ZonalFn.zeros(3), g).coeffs == 0.0)

    def test_multiply_constant(self):
        d = 3
        g = ZonalFn(d, [0.2, 1.0, -0.5])
        z0 = 1.0 / math.sqrt(np.pi / 2)
        assert_allclose(multiply(ZonalFn.basis_fn(d, 0), g).coeffs[:3], z0 * g.coeffs, atol=1e-14)

    def test_multiply_z1_z1_d2_against_adaptive(self):
        d = 2
        z1 = ZonalFn.basis_fn(d, 1)
        prod = multiply(z1, z1)
        for k in range(3):
            zk = ZonalFn.basis_fn(d, k)
            oracle = quad_inner(d, lambda t: z1(t) ** 2, zk)
            assert abs(prod.coeffs[k] - oracle) < 1e-13
        assert abs(prod.coeffs[1]) < 1e-14

    def test_grad_dot_z1_z1_d2_against_adaptive(self):
        d = 2
        z1 = ZonalFn.basis_fn(d, 1)
        gd = grad_dot(z1, z1)
        for k in range(3):
            zk = ZonalFn.basis_fn(d, k)
            oracle = quad_inner(d, lambda t: z1.dtheta(t) ** 2, zk)
            assert abs(gd.coeffs[k] - oracle) < 1e-13
        assert abs(gd.coeffs[1]) < 1e-14

    def test_grad_dot_constant(self):
        g = ZonalFn(4, [0.0, 1.0, 2.0, 3.0])
        assert_allclose(grad_dot(ZonalFn(4, [2.0]), g).coeffs, 0.0, atol=1e-15)

    @pytest.mark.parametrize("d", [2, 3, 5])
    def test_integration_by_parts(self, d):
        L = 12
        rule = make_quadrature(d, L + 2)
        dZ = rule.basis_dtheta(L)
        got = (dZ**2) @ rule.weights
        assert_allclose(got, [lb_eigenvalue(d, l) for l in range(L + 1)], rtol=1e-12, atol=1e-12)

    @settings(max_examples=25, deadline=None)
    @given(st.integers(2, 6), st.lists(st.floats(-2, 2), min_size=1, max_size=5),
           st.lists(st.floats(-2, 2), min_size=1, max_size=5), st.floats(-3, 3))
    def test_commutative_bilinear_symmetric(self, d, a, b, c):
        f, g = ZonalFn(d, a), ZonalFn(d, b)
        assert_allclose(multiply(f, g).coeffs, multiply(g, f).coeffs, atol=1e-12)
        assert_allclose(grad_dot(f, g).coeffs, grad_dot(g, f).coeffs, atol=1e-11)
        assert_allclose(multiply(f * c, g).coeffs, c * multiply(f, g).coeffs, atol=1e-11)
        h = f + g
        assert_allclose(multiply(h, g).coeffs,
                        (multiply(f, g) + multiply(g, g)).coeffs, atol=1e-11)

    def test_multiply_pointwise(self, rng):
        d = 4
        f, g = ZonalFn(d, rng.standard_normal(4)), ZonalFn(d, rng.standard_normal(6))
        theta = np.linspace(0, np.pi, 13)
        assert_allclose(multiply(f, g)(theta), f(theta) * g(theta), atol=1e-12)


class TestLaplaceBeltrami:
    def test_constant(self):
        assert np.all(apply_lb(ZonalFn(3, [4.0])).coeffs == 0.0)

    def test_z3_d3(self):
        assert_allclose(apply_lb(ZonalFn.basis_fn(3, 3)).coeffs, [0, 0, 0, -15.0])

    @pytest.mark.parametrize("d", [2, 3, 5])
    def test_against_finite_difference(self, d, rng):
        f = ZonalFn(d, rng.standard_normal(6))
        theta = np.linspace(0.4, 2.7, 8)
        h = 1e-4
        s = lambda t: np.sin(t) ** (d - 1)
        flux = lambda t: s(t) * f.dtheta(t)
        fd = (flux(theta + h / 2) - flux(theta - h / 2)) / h / s(theta)
        lf = apply_lb(f)(theta)
        assert_allclose(lf, fd, atol=1e-6 * np.abs(lf).max())


class TestSobolev:
    def test_example(self):
        assert_allclose(sobolev_norm(ZonalFn.basis_fn(3, 2), 1.0), 3.0, rtol=1e-15)

    def test_s_zero_is_l2(self, rng):
        c = rng.standard_normal(5)
        assert_allclose(sobolev_norm(ZonalFn(2, c), 0.0), np.linalg.norm(c))

    def test_negative_index(self):
        with pytest.raises(ValueError):
            sobolev_norm(ZonalFn(2, [1.0]), -0.5)
