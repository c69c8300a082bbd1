import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy.special import beta

from stablelab.measures import total_variation
from stablelab.sde_solver import SolverConfig
from stablelab.sharpness import (SharpnessParams, default_zeta, nonexistence_fixture, scaling_constant_hat_c,
                                 scaling_integral, sharpness_integral, sharpness_kato_diagnostics,
                                 truncated_sharpness_measure)
from stablelab.stable_core import DomainError


def beta_form(a, z):
    return beta(1 + z - a, a - 1) + beta(1 - z, 1 + z - a) - beta(1 - z, a - 1)


@st.composite
def window(draw):
    a = draw(st.floats(1.1, 1.9))
    t = draw(st.floats(0.05, 0.95))
    return a, (a - 1) + t * (a / 2 - (a - 1))


def test_window_guard():
    with pytest.raises(DomainError):
        SharpnessParams.from_alpha(1.5, 0.75)
    with pytest.raises(DomainError):
        SharpnessParams.from_alpha(1.5, 0.5)
    with pytest.raises(DomainError):
        sharpness_integral(2.0, 0.9)


@given(window())
def test_integral_forms_agree_with_beta_closed_form(az):
    a, z = az
    ref = beta_form(a, z)
    assert sharpness_integral(a, z, "raw") == pytest.approx(ref, rel=1e-10)
    assert sharpness_integral(a, z, "rewritten") == pytest.approx(ref, rel=1e-10)


def test_params_at_default():
    sp = SharpnessParams.from_alpha(1.5)
    assert sp.zeta == default_zeta(1.5) == 0.625
    assert sp.I == pytest.approx(15.5286421644, rel=1e-10)
    assert sp.C_alpha == pytest.approx(0.161419668771, rel=1e-10)
    assert sp.c_tilde == pytest.approx(0.3989422804, rel=1e-10)
    assert sp.C_alpha * sp.c_tilde * sp.I == pytest.approx(1.0, rel=1e-14)


@given(window(), st.floats(0.2, 5.0))
def test_hat_c_even_and_homogeneous(az, y):
    a, z = az
    f = scaling_integral(a, z, y)
    assert scaling_integral(a, z, -y) == pytest.approx(f, rel=1e-9)
    assert scaling_integral(a, z, 2 * y) == pytest.approx(2 ** z * f, rel=1e-9)


def test_hat_c_spread_small():
    rep = scaling_constant_hat_c(1.5, 0.625)
    assert rep.spread < 1e-8
    assert rep.value == pytest.approx(12.4229, rel=1e-4)
    with pytest.raises(DomainError):
        scaling_constant_hat_c(1.5, 0.625, (0.0, 1.0))


def test_truncated_measure_variation_and_antisymmetry():
    sp = SharpnessParams.from_alpha(1.5)
    mu = truncated_sharpness_measure(1.5)
    assert total_variation(mu) == pytest.approx(2 * sp.C_alpha / (2 - 1.5), rel=1e-12)
    assert mu.total_mass() == pytest.approx(0.0, abs=1e-15)
    assert mu.mass_between(0, 0.3) == pytest.approx(-mu.mass_between(-0.3, 0), rel=1e-14)


def test_kato_diagnostics_split_at_boundary():
    d = sharpness_kato_diagnostics(1.5)
    assert d.above.passed
    assert d.boundary_diverges
    # logarithmic growth: equal increments per decade of r
    steps = np.diff(d.trend) / np.diff(np.log(1 / d.r_schedule))
    assert steps.std() < 0.1 * steps.mean()


def test_nonexistence_fixture_stalls():
    cfg = SolverConfig(x0=0.0, T=1.0, dt=1e-3, eps_jump=1e-2, n_paths=40, seed=2)
    rep = nonexistence_fixture(cfg, levels=(2, 3, 4, 5, 6))
    assert rep.meta["control_passed"]
    assert rep.control_distances[-1] < rep.control_distances[0] / 16
    assert rep.sharp_distances[-1] > rep.sharp_distances[0] / 16
    assert len(rep.rows()) == 4


def test_far_start_sees_only_noise():
    from stablelab.sde_solver import simulate_mollified
    from stablelab.stable_core import StableParams, simulate_levy_path
    cfg = SolverConfig(x0=10.0, T=0.2, dt=1e-3, eps_jump=5e-2, n_paths=3, seed=9)
    ens = simulate_mollified(cfg, truncated_sharpness_measure(1.5))
    for i, p in enumerate(ens.paths):
        free = simulate_levy_path(StableParams.from_alpha(1.5), 0.2, ens.dt, 5e-2, seed=9, path_index=i, x0=10.0)
        if np.all(np.abs(free.values) > 1.5):
            np.testing.assert_allclose(p.values, free.values, atol=1e-12)
