import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy import integrate, stats
from scipy.special import gamma

from stablelab.stable_core import (ConfigError, DomainError, StableParams, draw_noise, levy_constant,
                                   levy_tail_mass, path_rng, potential_constant, sample_stable_increment,
                                   simulate_levy_path, small_jump_variance)

alphas = st.floats(1.01, 1.99)


def test_levy_constant_at_three_halves():
    # Gamma(-1/2) = -2 sqrt(pi) and cos(3 pi / 4) = -sqrt(2)/2
    expected = 1.5 / (2.0 * (-2.0 * math.sqrt(math.pi)) * (-math.sqrt(2.0) / 2.0))
    assert levy_constant(1.5) == pytest.approx(expected, rel=1e-14)
    assert levy_constant(1.5) == pytest.approx(0.29920671030107454, rel=1e-15)


def test_levy_constant_at_one_point_two():
    # same constant written through Gamma((1+a)/2) / Gamma(1-a/2)
    a = 1.2
    alt = a * 2 ** (a - 1) * gamma((1 + a) / 2) / (math.sqrt(math.pi) * gamma(1 - a / 2))
    assert levy_constant(a) == pytest.approx(alt, rel=1e-13)


def test_potential_constant_frozen():
    assert potential_constant(1.5) == pytest.approx(0.7978845608028654, rel=1e-15)


@given(alphas)
def test_constants_positive(a):
    assert levy_constant(a) > 0
    assert potential_constant(a) > 0


@pytest.mark.parametrize("a", [1.0, 2.0, 0.5, 2.5])
def test_constants_reject_outside_window(a):
    with pytest.raises(DomainError):
        levy_constant(a)


def test_tail_mass_matches_quadrature():
    p = StableParams.from_alpha(1.5)
    for eps in (0.01, 0.3, 2.0):
        num, _ = integrate.quad(lambda r: p.c1 * r ** (-2.5), eps, np.inf, epsabs=0, epsrel=1e-13)
        assert levy_tail_mass(p, eps) == pytest.approx(2 * num, rel=1e-10)


def test_tail_mass_value():
    p = StableParams.from_alpha(1.5)
    assert levy_tail_mass(p, 1.0) == pytest.approx(0.39894228040143, rel=1e-12)


@given(alphas, st.floats(1e-4, 10.0))
def test_tail_mass_doubling(a, eps):
    p = StableParams.from_alpha(a)
    assert levy_tail_mass(p, eps) / levy_tail_mass(p, 2 * eps) == pytest.approx(2 ** a, rel=1e-13)


def test_tail_mass_rejects_nonpositive():
    with pytest.raises(DomainError):
        levy_tail_mass(StableParams.from_alpha(1.5), 0.0)


def test_increment_mean_and_cf():
    p = StableParams.from_alpha(1.5)
    n, dt = 100_000, 0.5
    x = sample_stable_increment(p, dt, seed=1, size=n)
    # heavy tails: symmetry through the sign fraction, law through the CF
    assert abs(np.mean(x > 0) - 0.5) < 4 * 0.5 / math.sqrt(n)
    for xi in (0.5, 1.0, 2.0):
        emp = np.mean(np.cos(xi * x))
        assert abs(emp - math.exp(-dt * xi ** 1.5)) < 3 * math.sqrt(2.0 / n)


def test_increment_self_similarity():
    p = StableParams.from_alpha(1.5)
    a = sample_stable_increment(p, 1.0, seed=4, size=1000)
    b = sample_stable_increment(p, 0.2, seed=4, size=1000)
    np.testing.assert_allclose(b, 0.2 ** (1 / 1.5) * a, rtol=1e-14)


def test_jump_counts_poisson():
    p = StableParams.from_alpha(1.5)
    eps, T = 0.5, 1.0
    counts = np.array([draw_noise(p, T, 0.01, eps, path_rng(3, i)).jump_sizes.size for i in range(1000)])
    mean = T * levy_tail_mass(p, eps)
    ks = np.arange(0, 8)
    obs = np.array([np.sum(counts == k) for k in ks] + [np.sum(counts >= 8)])
    prob = np.append(stats.poisson.pmf(ks, mean), stats.poisson.sf(7, mean))
    chi2 = stats.chisquare(obs, prob * counts.size)
    assert chi2.pvalue > 0.01


def test_jump_sizes_exceed_threshold():
    p = StableParams.from_alpha(1.5)
    path = simulate_levy_path(p, 1.0, 1e-3, 0.05, seed=2)
    assert np.all(np.abs(path.jump_sizes) > 0.05)
    # the value increment over each jump's step contains the jump
    inc = np.diff(path.values) - path.gaussian
    per_step = np.bincount(path.jump_step, weights=path.jump_sizes, minlength=inc.size)
    np.testing.assert_allclose(inc, per_step, atol=1e-12)


def test_large_threshold_drop_mode_is_constant():
    p = StableParams.from_alpha(1.5)
    path = simulate_levy_path(p, 1.0, 1e-2, 1e12, seed=0, small_jump_mode="drop")
    assert path.jump_sizes.size == 0
    assert np.all(path.values == 0.0)


def test_terminal_cf_gaussian_surrogate():
    p = StableParams.from_alpha(1.5)
    T = 1.0
    xT = np.array([draw_noise(p, T, 0.01, 1e-3, path_rng(5, i)).levy_increments().sum()
                   for i in range(4000)])
    for xi in (0.5, 1.0, 2.0):
        emp = np.mean(np.cos(xi * xT))
        assert abs(emp - math.exp(-T * xi ** 1.5)) < 4 * math.sqrt(2.0 / xT.size)


def test_small_jump_variance_closed_form():
    p = StableParams.from_alpha(1.5)
    num, _ = integrate.quad(lambda r: r ** 2 * p.c1 * r ** (-2.5), 0, 0.1)
    assert small_jump_variance(p, 0.1) == pytest.approx(2 * num, rel=1e-10)


def test_paths_bit_identical():
    p = StableParams.from_alpha(1.5)
    a = simulate_levy_path(p, 0.5, 1e-3, 0.01, seed=12, path_index=3)
    b = simulate_levy_path(p, 0.5, 1e-3, 0.01, seed=12, path_index=3)
    assert a.values.tobytes() == b.values.tobytes()
    assert a.jump_times.tobytes() == b.jump_times.tobytes()


def test_times_grid_and_drift_record():
    p = StableParams.from_alpha(1.5)
    path = simulate_levy_path(p, 0.5, 1e-3, 0.01, seed=1)
    assert path.times[0] == 0.0 and np.all(np.diff(path.times) > 0)
    assert np.all(path.drift_record == 0.0)


def test_domain_guard():
    p = StableParams.from_alpha(1.5)
    with pytest.raises(ConfigError):
        simulate_levy_path(p, 1.0, 1e-2, 2.0, seed=0, domain=1.0)
