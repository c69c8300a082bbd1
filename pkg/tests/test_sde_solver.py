import warnings

import numpy as np
import pytest

from stablelab.measures import SignedMeasure
from stablelab.sde_solver import (SolverConfig, StiffnessWarning, drift_cauchy_report, euler_ensemble,
                                  ensemble_noise, simulate_mollified, stable_dt)
from stablelab.stable_core import ConfigError, StableParams, path_rng, draw_noise

CFG = SolverConfig(x0=0.2, T=0.5, dt=1e-3, n_mollify=4, eps_jump=1e-2, n_paths=8, seed=3)


def test_constant_drift_record():
    noises = ensemble_noise(CFG)
    paths = euler_ensemble(noises, 0.0, lambda x: np.full_like(x, 0.7), CFG.eps_jump, CFG.small_jump_mode)
    for p in paths:
        assert p.drift_record[-1] == pytest.approx(0.7 * CFG.T, rel=1e-12)
        np.testing.assert_allclose(p.values - p.drift_record, np.concatenate([[0], np.cumsum(
            p.gaussian + np.bincount(p.jump_step, weights=p.jump_sizes, minlength=p.gaussian.size))]),
            atol=1e-12)


def test_zero_drift_is_pure_noise():
    ens = simulate_mollified(CFG, SignedMeasure.zero())
    assert np.all(ens.drifts() == 0.0)
    z = ensemble_noise(CFG)[0]
    np.testing.assert_allclose(ens.paths[0].values, CFG.x0 + np.concatenate([[0], np.cumsum(z.levy_increments())]))


def test_seed_determinism():
    mu = SignedMeasure.power(0.3, coef=-0.5)
    a = simulate_mollified(CFG, mu).states()
    b = simulate_mollified(CFG, mu).states()
    np.testing.assert_array_equal(a, b)
    from dataclasses import replace
    c = simulate_mollified(replace(CFG, seed=4), mu).states()
    assert not np.array_equal(a, c)


def test_comparison_monotone_in_drift():
    noises = ensemble_noise(CFG)
    lo = euler_ensemble(noises, 0.0, lambda x: -0.5 * np.tanh(x), CFG.eps_jump, CFG.small_jump_mode)
    hi = euler_ensemble(noises, 0.0, lambda x: -0.5 * np.tanh(x) + 0.3, CFG.eps_jump, CFG.small_jump_mode)
    for a, b in zip(lo, hi):
        assert np.all(b.values >= a.values - 1e-12)


def test_stiffness_warning_and_refinement():
    atom = SignedMeasure.atom(0.0, 1.0)
    from dataclasses import replace
    with pytest.warns(StiffnessWarning):
        ens = simulate_mollified(replace(CFG, n_mollify=8, n_paths=2), atom)
    assert ens.dt < CFG.dt
    assert ens.meta["drift_sup"] * ens.dt <= 0.1
    assert stable_dt(1000.0, 1e-3) == pytest.approx(6.25e-5)


def test_config_validation():
    with pytest.raises(ConfigError):
        SolverConfig(T=1.0, dt=0.3)
    with pytest.raises(ConfigError):
        SolverConfig(alpha=2.0)
    with pytest.raises(ConfigError):
        SolverConfig(n_paths=0)


def test_cauchy_report_zero_drift():
    rep = drift_cauchy_report(CFG, SignedMeasure.zero(), (2, 3, 4))
    assert np.all(rep.distances == 0.0) and rep.passed


def test_cauchy_report_smooth_drift_converges():
    xs = np.linspace(-1, 1, 201)
    mu = SignedMeasure.table(xs, -0.5 * xs * (1 - xs ** 2) ** 2)
    rep = drift_cauchy_report(CFG, mu, (2, 3, 4, 5))
    assert rep.passed
    assert rep.distances[-1] < rep.distances[0] / 8


def test_common_noise_across_levels():
    a = draw_noise(StableParams.from_alpha(1.5), 0.5, 1e-3, 1e-2, path_rng(3, 0))
    b = ensemble_noise(CFG)[0]
    np.testing.assert_array_equal(a.gaussian, b.gaussian)
    np.testing.assert_array_equal(a.jump_sizes, b.jump_sizes)
