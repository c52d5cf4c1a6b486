import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings

from oracles import instances, mp_gamma, mp_kernels, soundness_scale as _scale
from wiistab.wii import (
    PolySignal,
    build_coefficients,
    double_bound,
    gamma_k,
    oracle_moments,
    oracle_weighted_integral,
    single_bound,
)

def rel(a, b):
    return abs(a - b) / max(abs(b), 1e-300)


# ---------------------------------------------------------------- gamma_k


def test_gamma0_at_unit_arguments():
    assert gamma_k(0, 1.0, 1.0) == pytest.approx(math.e - 1, rel=1e-15)


@pytest.mark.parametrize("k", [0, 1, 2])
@pytest.mark.parametrize("x", [1e-12, 1e-9, 1e-6, 1e-4, 1e-3, 0.01, 0.3, 1.0, 4.9, 5.1, 20.0, 150.0])
def test_gamma_matches_extended_precision(k, x):
    got = gamma_k(k, x, 1.0)
    ref = mp_gamma(k, x, 1.0)
    assert float(rel(mpmath.mpf(got), ref)) <= 1e-12


def test_gamma2_tiny_alpha_against_50_term_series():
    x = mpmath.mpf("1e-9")
    series = sum(x**j / mpmath.factorial(j) for j in range(3, 53))
    assert float(rel(mpmath.mpf(gamma_k(2, 1e-9, 1.0)), series)) <= 1e-12


def test_gamma1_normalisation_limit():
    # gamma_1 / alpha^2 -> ell^2 / 2
    assert gamma_k(1, 1e-9, 2.0) / 1e-18 == pytest.approx(2.0, rel=1e-8)


@pytest.mark.parametrize("args", [(3, 1.0, 1.0), (-1, 1.0, 1.0), (0, 1.0, 0.0), (0, 1.0, -1.0), (1, -0.5, 1.0)])
def test_gamma_domain_errors(args):
    with pytest.raises(ValueError):
        gamma_k(*args)


# ---------------------------------------------------------------- kernels


def test_rho0_two_formulas_at_half_and_two():
    c = build_coefficients(0.5, 2.0)
    *_, rho0_a, rho0_b = mp_kernels(0.5, 2.0)
    assert float(rel(rho0_a, rho0_b)) < 1e-40
    assert rel(c.rho0, float(rho0_b)) < 1e-10
    alt = (c.alpha * c.gamma0 / c.gamma1) ** 2 * c.a_alpha
    assert rel(alt, c.rho0) < 1e-10


GRID = [(a, l) for a in np.geomspace(1e-4, 10, 9) for l in np.geomspace(1e-2, 10, 7) if a * l <= 100]


@pytest.mark.parametrize("alpha,ell", GRID)
def test_kernels_against_extended_precision(alpha, ell):
    c = build_coefficients(alpha, ell)
    g0, g1, g2, A, B, _, rho0 = mp_kernels(alpha, ell)
    assert g0 > g1 > g2 > 0 and A > 0 and B > 0
    # gamma0 - gamma1 = x is below one ulp of e^x once x is large
    if alpha * ell < 30:
        assert c.gamma0 > c.gamma1 > c.gamma2 > 0
    else:
        assert c.gamma0 >= c.gamma1 >= c.gamma2 > 0
    assert c.a_alpha > 0 and c.b_alpha > 0
    for got, ref in [(c.gamma0, g0), (c.gamma1, g1), (c.gamma2, g2), (c.a_alpha, A), (c.b_alpha, B), (c.rho0, rho0)]:
        assert float(rel(mpmath.mpf(got), ref)) < 1e-10
    alt = (c.alpha * c.gamma0 / c.gamma1) ** 2 * c.a_alpha
    assert rel(alt, c.rho0) < 1e-10


DISCOUNT_GRID = [(a, l) for a in np.geomspace(1e-4, 10, 11) for l in np.geomspace(1e-2, 10, 9)]


@pytest.mark.parametrize("alpha,ell", DISCOUNT_GRID)
def test_jensen_gain_beats_exponentially_discounted_jensen(alpha, ell):
    # I_w >= e^{-alpha ell} I >= (e^{-alpha ell} / ell) m0' R m0 is the bound being improved on
    c = build_coefficients(alpha, ell)
    assert c.single_jensen_gain > math.exp(-alpha * ell) / ell
    if ell <= 1:
        assert c.single_jensen_gain > math.exp(-alpha * ell)


def test_positive_kernels_at_unit_arguments():
    c = build_coefficients(1.0, 1.0)
    assert c.a_alpha > 0 and c.b_alpha > 0


@pytest.mark.parametrize("ell", [0.1, 1.0, 2.0, 7.5])
def test_limit_mode_values(ell):
    c = build_coefficients(0.0, ell)
    assert c.limit_mode
    assert c.single_jensen_gain == pytest.approx(1 / ell, rel=1e-15)
    assert c.single_refine_gain == pytest.approx(3 / ell, rel=1e-15)
    assert c.double_jensen_gain == pytest.approx(2 / ell**2, rel=1e-15)
    assert c.double_refine_gain == pytest.approx(4 * 4 / ell**2, rel=1e-15)
    assert np.allclose(c.l1, [1, -2 / ell], rtol=1e-15)
    assert np.allclose(c.l2, [1, -3 / ell], rtol=1e-15)
    assert c.gamma0 == c.gamma1 == c.rho0 == 0.0


def test_limit_rows_at_unit_length():
    c = build_coefficients(0.0, 1.0)
    assert list(c.l1) == [1.0, -2.0]
    assert list(c.l2) == [1.0, -3.0]


def test_double_refine_limit_matches_rho1_normalisation():
    # alpha^2 / rho1 -> 4 / ell^2, so the stored 4 alpha^2 / rho1 -> 16 / ell^2
    for ell in (0.5, 3.0):
        c = build_coefficients(1e-7, ell)
        assert c.alpha**2 / c.rho1 == pytest.approx(4 / ell**2, rel=1e-5)


@pytest.mark.parametrize("ell", [0.01, 0.3, 1.0, 4.0, 10.0])
def test_limit_continuity(ell):
    lim, near = build_coefficients(0.0, ell), build_coefficients(1e-8, ell)
    for f in ("single_jensen_gain", "single_refine_gain", "double_jensen_gain", "double_refine_gain"):
        assert rel(getattr(near, f), getattr(lim, f)) < 1e-5, f
    assert np.allclose(near.l1, lim.l1, rtol=1e-5)
    assert np.allclose(near.l2, lim.l2, rtol=1e-5)


def test_coefficients_are_immutable():
    c = build_coefficients(0.3, 1.0)
    with pytest.raises(ValueError):
        c.l1[0] = 2.0
    with pytest.raises(AttributeError):
        c.alpha = 1.0


def test_overflowing_argument_rejected():
    with pytest.raises(ValueError):
        build_coefficients(400.0, 1.0)


# ---------------------------------------------------------------- oracles


def test_oracle_constant_signal():
    phi = PolySignal([[1.0]], 0.0, 1.0)
    assert oracle_weighted_integral(phi, 1.0, [[1.0]]) == pytest.approx(1 - math.exp(-1), abs=1e-13)
    assert oracle_weighted_integral(phi, 1.0, [[1.0]], depth=2) == pytest.approx(math.exp(-1), abs=1e-13)


def test_oracle_unweighted_square():
    phi = PolySignal([[0.0, 1.0]], 0.0, 1.0)
    assert oracle_weighted_integral(phi, 0.0, [[1.0]]) == pytest.approx(1 / 3, abs=1e-14)


def test_oracle_zero_signal():
    phi = PolySignal(np.zeros((2, 3)), -1.0, 0.5)
    assert oracle_weighted_integral(phi, 0.7, np.eye(2)) == 0.0
    assert all(np.all(m == 0) for m in oracle_moments(phi))


def test_moments_of_constant_and_linear():
    m = oracle_moments(PolySignal([[1.0]], 0.0, 1.0))
    assert [float(v[0]) for v in m] == pytest.approx([1, 1 / 2, 1 / 6], abs=1e-15)
    # phi(s) = s: int s = 1/2; int_0^1 int_s^1 u du ds = int (1 - s^2)/2 = 1/3;
    # triple: int_0^1 int_s^1 (1 - u^2)/2 du ds = int (2/3 - s + s^3/3)/2 = 1/8
    m = oracle_moments(PolySignal([[0.0, 1.0]], 0.0, 1.0))
    assert [float(v[0]) for v in m] == pytest.approx([1 / 2, 1 / 3, 1 / 8], abs=1e-15)


def test_moments_against_quadrature():
    rng = np.random.default_rng(3)
    phi = PolySignal(rng.normal(size=(2, 5)), -1.3, 0.4)
    m0, m1, _ = oracle_moments(phi)
    # int_a^b int_s^b phi = int_a^b (u - a) phi(u) du
    from numpy.polynomial.legendre import leggauss

    x, w = leggauss(20)
    a, b = phi.a, phi.b
    u = 0.5 * (b - a) * (x + 1) + a
    vals = phi(u)
    assert np.allclose(m0, 0.5 * (b - a) * vals @ w, atol=1e-13)
    assert np.allclose(m1, 0.5 * (b - a) * (vals * (u - a)) @ w, atol=1e-13)


def test_poly_signal_degree_bound():
    with pytest.raises(ValueError):
        PolySignal(np.ones((1, 7)), 0.0, 1.0)
    with pytest.raises(ValueError):
        PolySignal(np.ones((1, 2)), 1.0, 1.0)


# ---------------------------------------------------------------- bounds


def test_bounds_vanish_on_zero_signal():
    c = build_coefficients(0.4, 2.0)
    assert single_bound(c, np.eye(2), [0, 0], [0, 0]) == 0.0
    assert double_bound(c, np.eye(2), [0, 0], [0, 0]) == 0.0


def test_single_bound_constant_signal_below_integral():
    c = build_coefficients(1.0, 1.0)
    assert single_bound(c, [[1.0]], [1.0], [0.5]) <= 1 - math.exp(-1) + 1e-15


def test_double_bound_constant_signal_below_integral():
    c = build_coefficients(1.0, 1.0)
    assert double_bound(c, [[1.0]], [0.5], [1 / 6]) <= math.exp(-1) + 1e-15


def test_wirtinger_single_value_in_limit():
    # phi(s) = s on [0, 1]: m0 = 1/2, m1 = 1/3
    c = build_coefficients(0.0, 1.0)
    m0, m1 = 0.5, 1 / 3
    lhat = m0 - 2 * m1  # L1 = [1, -2/ell]
    expected = m0**2 + 3 * lhat**2
    assert single_bound(c, [[1.0]], [m0], [m1]) == pytest.approx(expected, rel=1e-15)
    assert expected <= 1 / 3 + 1e-15


def test_double_limit_dominates_jensen():
    c = build_coefficients(0.0, 2.0)
    rng = np.random.default_rng(0)
    for _ in range(50):
        d1, d2 = rng.normal(size=3), rng.normal(size=3)
        M = rng.normal(size=(3, 3))
        R = M @ M.T + 0.1 * np.eye(3)
        assert double_bound(c, R, d1, d2) >= 2 / 4 * d1 @ R @ d1 - 1e-12


@pytest.mark.parametrize(
    "R", [np.ones((2, 3)), [[1.0, 2.0], [0.0, 1.0]], [[1.0, 0.0], [0.0, -1.0]], np.eye(3)]
)
def test_bound_argument_errors(R):
    c = build_coefficients(0.2, 1.0)
    with pytest.raises(ValueError):
        single_bound(c, R, [1.0, 0.0], [0.0, 1.0])


def test_moment_shape_mismatch():
    c = build_coefficients(0.2, 1.0)
    with pytest.raises(ValueError):
        double_bound(c, np.eye(2), [1.0, 0.0], [0.0])


@pytest.mark.parametrize("alpha,ell", [(0.2, 1.0), (1.3, 0.4), (3.0, 5.0), (1e-5, 2.0)])
def test_jensen_bound_sharp_for_exponential_signal(alpha, ell):
    # phi(s) = e^{alpha (b - s)} c turns the Schur-complement step into an equality
    c = build_coefficients(alpha, ell)
    vec = np.array([0.7, -1.2])
    R = np.array([[2.0, 0.3], [0.3, 1.0]])
    m0 = c.gamma0 / alpha * vec
    integral = c.gamma0 / alpha * vec @ R @ vec
    assert c.single_jensen_gain * m0 @ R @ m0 == pytest.approx(integral, rel=1e-9)


# ---------------------------------------------------------------- soundness


SOUNDNESS = settings(max_examples=500, deadline=None, derandomize=True)


@SOUNDNESS
@given(instances())
def test_single_jensen_sound(inst):
    phi, R, alpha = inst
    c = build_coefficients(alpha, phi.b - phi.a)
    m0, _, _ = oracle_moments(phi)
    lhs = oracle_weighted_integral(phi, alpha, R, depth=1)
    assert lhs >= c.single_jensen_gain * m0 @ R @ m0 - 1e-9 * _scale(phi, R, alpha)


@SOUNDNESS
@given(instances())
def test_double_jensen_sound(inst):
    phi, R, alpha = inst
    c = build_coefficients(alpha, phi.b - phi.a)
    _, d1, _ = oracle_moments(phi)
    lhs = oracle_weighted_integral(phi, alpha, R, depth=2)
    assert lhs >= c.double_jensen_gain * d1 @ R @ d1 - 1e-9 * _scale(phi, R, alpha)


@SOUNDNESS
@given(instances())
def test_single_refined_sound(inst):
    phi, R, alpha = inst
    c = build_coefficients(alpha, phi.b - phi.a)
    m0, m1, _ = oracle_moments(phi)
    bound = single_bound(c, R, m0, m1)
    assert bound >= c.single_jensen_gain * m0 @ R @ m0 - 1e-12 * _scale(phi, R, alpha)
    assert oracle_weighted_integral(phi, alpha, R, depth=1) >= bound - 1e-9 * _scale(phi, R, alpha)


@SOUNDNESS
@given(instances())
def test_double_refined_sound(inst):
    phi, R, alpha = inst
    c = build_coefficients(alpha, phi.b - phi.a)
    _, d1, d2 = oracle_moments(phi)
    bound = double_bound(c, R, d1, d2)
    assert oracle_weighted_integral(phi, alpha, R, depth=2) >= bound - 1e-9 * _scale(phi, R, alpha)
