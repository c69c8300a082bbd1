import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy import integrate

from stablelab.measures import SignedMeasure
from stablelab.potentials import (NonContractionError, bounded_oscillatory_map, fit_envelope, kato_contraction,
                                  parametrix_density, potential_operator_series, potential_table,
                                  renormalized_potential_v, stable_heat_kernel, u_lambda,
                                  u_lambda_closed_form_at_zero, u_lambda_prime, v_prime)
from stablelab.stable_core import StableParams, levy_tail_mass

P = StableParams.from_alpha(1.5)


def test_heat_kernel_at_origin():
    assert float(stable_heat_kernel(P, 1.0, 0.0)) == pytest.approx(math.gamma(5 / 3) / math.pi, rel=1e-10)
    assert float(stable_heat_kernel(P, 1.0, 0.0)) == pytest.approx(0.2873527514521645, rel=1e-10)


@given(st.floats(0.05, 5.0), st.floats(-6.0, 6.0))
def test_heat_kernel_matches_direct_integral(t, z):
    direct, _ = integrate.quad(lambda xi: math.exp(-t * xi ** 1.5) * math.cos(xi * z) / math.pi, 0, np.inf,
                               limit=400, epsabs=1e-13)
    assert float(stable_heat_kernel(P, t, z)) == pytest.approx(direct, abs=1e-9)


def test_heat_kernel_characteristic_function():
    z = np.linspace(-200, 200, 80_001)
    p = stable_heat_kernel(P, 1.0, z)
    for xi in (0.1, 0.5, 1.0, 2.0, 3.0):
        cf = np.trapezoid(p * np.cos(xi * z), z)
        # mass beyond |z| = 200 is about 2 c1 200^{-1.5} / 1.5 ~ 1.4e-4
        assert cf == pytest.approx(math.exp(-xi ** 1.5), abs=5e-4)


def test_u_lambda_closed_form():
    assert u_lambda_closed_form_at_zero(P, 1.0) == pytest.approx(0.76980, abs=5e-6)
    for a in (1.2, 1.5, 1.8):
        p = StableParams.from_alpha(a)
        for lam in (0.5, 1.0, 5.0):
            assert float(u_lambda(p, lam, 0.0)) == pytest.approx(u_lambda_closed_form_at_zero(p, lam), rel=1e-8)


@given(st.floats(0.05, 10.0), st.floats(0.0, 30.0))
def test_u_lambda_symmetry(lam, x):
    assert float(u_lambda(P, lam, x)) == float(u_lambda(P, lam, -x))
    assert float(u_lambda_prime(P, lam, x)) == -float(u_lambda_prime(P, lam, -x))


def test_u_lambda_against_quadrature():
    for x in (0.3, 1.0, 4.0):
        num, _ = integrate.quad(lambda xi: 1.0 / (1.0 + xi ** 1.5) / math.pi, 0, np.inf, weight="cos", wvar=x)
        assert float(u_lambda(P, 1.0, x)) == pytest.approx(num, rel=1e-8)


def test_u_lambda_prime_finite_difference():
    h = 1e-4
    fd = (float(u_lambda(P, 1.0, 0.7 + h)) - float(u_lambda(P, 1.0, 0.7 - h))) / (2 * h)
    assert float(u_lambda_prime(P, 1.0, 0.7)) == pytest.approx(fd, abs=1e-6)
    assert float(u_lambda_prime(P, 1.0, 0.0)) == 0.0


def test_envelopes_hold_on_holdout():
    g = fit_envelope(P, "gradient")
    u = fit_envelope(P, "potential")
    assert g.holds and u.holds
    assert g.lower > 0 and u.lower > 0


def test_v_values_and_scaling():
    assert renormalized_potential_v(P, 0.0) == 0.0
    assert v_prime(P, 0.0) == 0.0
    x = np.array([0.1, 0.7, 3.0, -2.0])
    np.testing.assert_allclose(renormalized_potential_v(P, 2 * x), 2 ** 0.5 * renormalized_potential_v(P, x),
                               rtol=1e-15)
    np.testing.assert_array_equal(v_prime(P, -x), -v_prime(P, x))


def test_v_as_limit_of_potential_difference():
    lam = 1e-4
    diff = float(u_lambda(P, lam, 0.0) - u_lambda(P, lam, 1.0))
    assert diff == pytest.approx(float(renormalized_potential_v(P, 1.0)), abs=1e-3)


def test_contraction_decreases_with_lambda():
    leb = SignedMeasure.lebesgue()
    C1 = fit_envelope(P, "gradient").upper
    vals = [kato_contraction(P, leb, lam, 0.3, C1) for lam in 2.0 ** np.arange(4, 40, 4)]
    assert all(b < a for a, b in zip(vals, vals[1:]))
    assert vals[-1] < 1e-3
    assert kato_contraction(P, SignedMeasure.zero(), 1.0, 0.3, C1) == 0.0
    assert kato_contraction(P, leb.scaled(2.0), 16.0, 0.3, C1) == pytest.approx(2 * vals[0], rel=1e-12)


def test_series_with_zero_drift_is_potential():
    nu = SignedMeasure.atom(0.2, 1.0)
    xs = np.linspace(-2, 2, 41)
    res = potential_operator_series(P, SignedMeasure.zero(), nu, 1.0, 5, xs)
    direct = [float(u_lambda(P, 1.0, x - 0.2)) for x in xs]
    np.testing.assert_allclose(res.values, direct, rtol=1e-8)


def test_series_solves_resolvent_identity():
    # w = U nu + U(w' mu): for atomic mu = nu this is a finite linear identity
    atoms = np.array([-0.5, 0.5])
    mass = np.array([0.3, -0.2])
    mu = SignedMeasure.atom(-0.5, 0.3) + SignedMeasure.atom(0.5, -0.2)
    xs = np.linspace(-3, 3, 61)
    res = potential_operator_series(P, mu, mu, 1.0, 30, xs, h=0.05)
    assert res.ratio < 1
    at = potential_operator_series(P, mu, mu, 1.0, 30, atoms, h=0.05)
    tab = potential_table(1.5)
    U = tab.u(1.0, xs[:, None] - atoms[None, :])
    rhs = U @ mass + U @ (mass * at.derivative)
    np.testing.assert_allclose(res.values, rhs, atol=1e-10)


def test_series_non_contraction():
    mu = SignedMeasure.atom(-0.1, 3.0) + SignedMeasure.atom(0.1, -3.0)
    with pytest.raises(NonContractionError):
        potential_operator_series(P, mu, mu, 0.01, 20, np.linspace(-1, 1, 11))


def test_series_mollification_stability():
    mu = SignedMeasure.power(0.25, coef=0.5)
    xs = np.linspace(-2, 2, 41)
    base = potential_operator_series(P, mu, mu, 2.0, 30, xs, h=0.01).values
    from stablelab.measures import mollify
    gaps = []
    for n in (2, 4, 6):
        m = mollify(mu, n)
        tab = SignedMeasure.table(m.nodes, m.table)
        gaps.append(np.abs(potential_operator_series(P, tab, tab, 2.0, 30, xs, h=0.01).values - base).max())
    assert gaps[0] > gaps[1] > gaps[2]


def test_parametrix_without_drift_is_heat_kernel():
    ys = np.linspace(-3, 3, 25)
    g = parametrix_density(P, SignedMeasure.zero(), [0.1, 0.4], [0.0, 0.5], ys)
    for i, t in enumerate((0.1, 0.4)):
        np.testing.assert_allclose(g.values[i], stable_heat_kernel(P, t, ys[None, :] - np.array([[0.0], [0.5]])),
                                   rtol=1e-10)


def test_parametrix_mass_and_positivity():
    mu = SignedMeasure.atom(-0.5, 0.1) + SignedMeasure.atom(0.5, 0.1)
    h, Z = 1 / 32, 16.0
    ys = h * np.arange(-int(Z / h), int(Z / h) + 1)
    g = parametrix_density(P, mu, [0.05, 0.1], [0.0], ys, K=4)
    assert g.converged and g.positive
    for i, t in enumerate(g.t_nodes):
        mass = np.trapezoid(g.values[i, 0], ys) + t * levy_tail_mass(P, Z)
        assert mass == pytest.approx(1.0, abs=1e-3)


def test_bounded_map_at_origin():
    # int_0^inf sin(xi) xi^{1-a} dxi = Gamma(2-a) sin(pi (2-a) / 2)
    assert bounded_oscillatory_map(P, 1.0, 0.0) == pytest.approx(math.gamma(0.5) * math.sin(math.pi / 4), rel=1e-8)


def test_bounded_map_uniform_bound_and_decay():
    vals = [abs(bounded_oscillatory_map(P, lam, x)) for lam in (0.1, 1.0, 10.0) for x in (0.1, 0.5, 1.0, 3.0)]
    assert max(vals) < 10 * np.median(vals)
    tail = [abs(bounded_oscillatory_map(P, 1.0, x)) for x in (4.0, 16.0, 64.0)]
    assert tail[0] > tail[1] > tail[2]
