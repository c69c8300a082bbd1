import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import integrate

from stablelab.measures import (DIVERGENT, DivergenceError, SignedMeasure, besov_heat_norm, bump, is_kato,
                                kato_heat_modulus, kato_modulus, mollify, total_variation)

SCHEDULE = np.geomspace(0.5, 1e-8, 14)


def test_total_variation_atom():
    assert total_variation(SignedMeasure.atom(0.3, -3.0)) == 3.0


def test_total_variation_power():
    assert total_variation(SignedMeasure.power(0.5)) == pytest.approx(4.0, rel=1e-14)


def test_total_variation_mixed_against_quadrature():
    xs = np.linspace(-2, 2, 41)
    nu = SignedMeasure.atom(1.0, -0.7) + SignedMeasure.table(xs, np.sin(3 * xs))
    ys = np.sin(3 * xs)
    brute, _ = integrate.quad(lambda x: abs(np.interp(x, xs, ys)), -2, 2, points=xs[1:-1], limit=400)
    assert total_variation(nu) == pytest.approx(0.7 + brute, rel=1e-10)


def test_divergent_power_rejected():
    with pytest.raises((DivergenceError, ValueError)):
        total_variation(SignedMeasure.power(1.0))


def test_jordan_decomposition():
    nu = SignedMeasure.atom(0.0, 2.0) + SignedMeasure.atom(1.0, -0.5) + SignedMeasure.lebesgue(-1, 1, -0.25)
    assert nu.positive_part().total_mass() - nu.negative_part().total_mass() == pytest.approx(nu.total_mass())
    assert nu.positive_part().total_mass() + nu.negative_part().total_mass() == pytest.approx(nu.total_variation())


@settings(max_examples=12)
@given(st.floats(0.05, 0.95), st.floats(1e-3, 0.9))
def test_lebesgue_modulus_closed_form(eta, r):
    leb = SignedMeasure.lebesgue(-1.0, 1.0)
    assert kato_modulus(leb, eta, r) == pytest.approx(2 * r ** eta / eta, rel=1e-12)


def test_atom_modulus_divergent():
    assert kato_modulus(SignedMeasure.atom(0.0), 0.5, 0.1) == DIVERGENT
    assert not is_kato(SignedMeasure.atom(0.0), 0.5, SCHEDULE).passed


def test_power_modulus_value():
    # |x|^{-1/2} on [-1,1], eta = 0.7, r = 0.1: the sup sits at x = 0 where the
    # integral is 2 int_0^r y^{-0.3} y^{-0.5} dy = 2 r^0.2 / 0.2
    nu = SignedMeasure.power(0.5)
    assert kato_modulus(nu, 0.7, 0.1) == pytest.approx(10 * 0.1 ** 0.2, rel=1e-6)


@settings(max_examples=10)
@given(st.floats(0.1, 0.9), st.floats(1e-3, 0.5), st.floats(0.1, 5.0))
def test_modulus_monotone_and_homogeneous(eta, r, c):
    nu = SignedMeasure.power(0.3) + SignedMeasure.lebesgue(0.5, 2.0, 0.4)
    m = kato_modulus(nu, eta, r)
    assert kato_modulus(nu, eta, 0.5 * r) <= m * (1 + 1e-12)
    assert kato_modulus(nu.scaled(c), eta, r) == pytest.approx(c * m, rel=1e-10)


@pytest.mark.parametrize("s", [0.25, 0.5, 0.75])
@pytest.mark.parametrize("eta", [0.1, 0.35, 0.6, 0.9])
def test_kato_verdict_rule(s, eta):
    nu = SignedMeasure.power(s)
    assert is_kato(nu, eta, SCHEDULE).passed == (eta > s)


def test_lebesgue_is_kato():
    assert is_kato(SignedMeasure.lebesgue(), 0.3, SCHEDULE).passed


def test_mollified_atom_at_center():
    for n in (0, 3, 6):
        m = mollify(SignedMeasure.atom(0.0), n)
        assert m(np.array([0.0]))[0] == pytest.approx(2 ** n * bump(np.array([0.0]))[0], rel=1e-14)


@pytest.mark.parametrize("n", [2, 5, 8])
def test_mollify_preserves_mass(n):
    nu = SignedMeasure.power(0.4, coef=-0.7) + SignedMeasure.atom(0.25, 0.3) + SignedMeasure.lebesgue(0, 2, 0.2)
    assert mollify(nu, n).total_mass() == pytest.approx(nu.total_mass(), abs=1e-10)


def test_mollify_weak_convergence():
    nu = SignedMeasure.power(0.5) + SignedMeasure.atom(0.3, 0.5)
    tests = [np.cos, np.sin, lambda x: np.exp(-x * x), lambda x: x ** 2, lambda x: 1 / (1 + x ** 2)]
    x = np.linspace(-1.5, 1.5, 200_001)
    for f in tests:
        exact = nu.integrate(f)
        errs = [abs(np.trapezoid(mollify(nu, n)(x) * f(x), x) - exact) for n in (2, 4, 6)]
        assert errs[0] > errs[1] > errs[2]


def test_besov_lebesgue_wide():
    leb = SignedMeasure.lebesgue(-60.0, 60.0)
    val = besov_heat_norm(leb, 0.5, [0.25, 1.0], x_grid=[0.0])
    assert val == pytest.approx(math.sqrt(2.0), rel=1e-8)


def test_besov_atom_constant_in_t():
    vals = [besov_heat_norm(SignedMeasure.atom(0.0), 1.0, [t], x_grid=[0.0]) for t in (0.01, 0.3, 1.0)]
    np.testing.assert_allclose(vals, (2 * math.pi) ** -0.5, rtol=1e-12)


def test_besov_linear_in_weights():
    nu = SignedMeasure.power(0.3) + SignedMeasure.atom(0.5, 0.2)
    a = besov_heat_norm(nu, 0.8, [0.1, 0.5])
    assert besov_heat_norm(nu.scaled(2.0), 0.8, [0.1, 0.5]) == pytest.approx(2 * a, rel=1e-12)


def test_heat_modulus_lebesgue():
    leb = SignedMeasure.lebesgue(-60.0, 60.0)
    eta, t = 0.5, 0.4
    assert kato_heat_modulus(leb, eta, t, x_grid=[0.0]) == pytest.approx(2 * t ** (eta / 2) / eta, rel=1e-6)


def test_heat_modulus_zero_and_monotone():
    assert kato_heat_modulus(SignedMeasure.zero(), 0.5, 0.5) == 0.0
    nu = SignedMeasure.power(0.3)
    vals = [kato_heat_modulus(nu, 0.6, t) for t in (0.05, 0.2, 0.8)]
    assert vals[0] <= vals[1] <= vals[2]


def test_json_roundtrip():
    nu = SignedMeasure.power(0.3, coef=2.0, lo=-0.5, hi=1.0) + SignedMeasure.atom(0.1, -1.0)
    back = SignedMeasure.from_json(nu.to_json())
    assert back.to_json() == nu.to_json()
