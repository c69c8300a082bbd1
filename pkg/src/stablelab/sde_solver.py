"""Euler scheme for dX = mu_n(X) dt + dL with the level-n mollified drift,
exact retained jumps and common random numbers across levels."""

import warnings
from dataclasses import dataclass, field

import numpy as np

from .measures import mollify
from .stable_core import (ConfigError, JumpPath, StableParams, draw_noise, path_from_noise,
                          path_rng)

STIFFNESS = 0.1


class StiffnessWarning(UserWarning):
    pass


@dataclass(frozen=True)
class SolverConfig:
    x0: float = 0.0
    T: float = 1.0
    dt: float = 1e-3
    n_mollify: int = 4
    eps_jump: float = 1e-2
    n_paths: int = 100
    seed: int = 0
    alpha: float = 1.5
    small_jump_mode: str = "gaussian-surrogate"
    auto_refine: bool = True

    def __post_init__(self):
        if not (self.dt > 0 and self.T > 0):
            raise ConfigError("dt and T must be positive")
        if self.n_paths < 1:
            raise ConfigError("n_paths must be at least 1")
        if self.n_mollify < 0:
            raise ConfigError("n_mollify must be nonnegative")
        if not 1.0 < self.alpha < 2.0:
            raise ConfigError("alpha must lie in (1, 2)")
        if self.eps_jump <= 0:
            raise ConfigError("eps_jump must be positive")
        steps = self.T / self.dt
        if abs(steps - round(steps)) > 1e-9 * steps:
            raise ConfigError("T must be an integer multiple of dt")

    @property
    def params(self):
        return StableParams.from_alpha(self.alpha)


@dataclass
class Ensemble:
    cfg: SolverConfig
    dt: float
    paths: list
    meta: dict = field(default_factory=dict)

    @property
    def times(self):
        return self.paths[0].times

    def states(self):
        return np.stack([p.values for p in self.paths])

    def drifts(self):
        return np.stack([p.drift_record for p in self.paths])

    def terminal(self):
        return np.array([p.values[-1] for p in self.paths])


def stable_dt(drift_sup, dt, limit=STIFFNESS):
    """Halve dt until drift_sup * dt <= limit."""
    while drift_sup * dt > limit:
        dt *= 0.5
    return dt


def euler_path(noise, x0, drift_fn, eps_jump, mode):
    """Left-point Euler for the drift; retained jumps added at the end of
    their step. Returns a JumpPath with A_t = sum drift_fn(X_k) dt."""
    n, dt = noise.n_steps, noise.dt
    jumps = noise.jump_sum_per_step()
    x = np.empty(n + 1)
    a = np.empty(n + 1)
    x[0], a[0] = x0, 0.0
    g = noise.gaussian
    xk, ak = float(x0), 0.0
    for k in range(n):
        da = float(drift_fn(xk)) * dt
        ak += da
        xk = xk + da + g[k] + jumps[k]
        x[k + 1], a[k + 1] = xk, ak
    return JumpPath(dt * np.arange(n + 1), x, noise.jump_times, noise.jump_sizes, float(eps_jump),
                    mode, a, g, noise.jump_step)


def euler_ensemble(noises, x0, drift_fn, eps_jump, mode):
    """Vectorized Euler across paths sharing a grid: drift_fn takes an array."""
    n, dt = noises[0].n_steps, noises[0].dt
    P = len(noises)
    G = np.stack([z.gaussian for z in noises], axis=1)  # (n, P)
    J = np.stack([z.jump_sum_per_step() for z in noises], axis=1)
    X = np.empty((n + 1, P))
    A = np.empty((n + 1, P))
    X[0], A[0] = x0, 0.0
    xk = np.full(P, float(x0))
    ak = np.zeros(P)
    for k in range(n):
        da = drift_fn(xk) * dt
        ak = ak + da
        xk = xk + da + G[k] + J[k]
        X[k + 1], A[k + 1] = xk, ak
    times = dt * np.arange(n + 1)
    return [JumpPath(times, X[:, i].copy(), z.jump_times, z.jump_sizes, float(eps_jump), mode,
                     A[:, i].copy(), z.gaussian, z.jump_step) for i, z in enumerate(noises)]


def ensemble_noise(cfg, dt=None):
    dt = cfg.dt if dt is None else dt
    params = cfg.params
    return [draw_noise(params, cfg.T, dt, cfg.eps_jump, path_rng(cfg.seed, i), cfg.small_jump_mode)
            for i in range(cfg.n_paths)]


def simulate_mollified(cfg, mu, dt=None, drift=None):
    """Ensemble for the level-n mollified drift. The same (seed, path index)
    gives the same noise for every level at a fixed dt."""
    drift = mollify(mu, cfg.n_mollify) if drift is None and not mu.is_zero() else drift
    sup = drift.sup_abs() if drift is not None else 0.0
    dt = cfg.dt if dt is None else dt
    if sup * dt > STIFFNESS:
        if cfg.auto_refine:
            new = stable_dt(sup, dt)
            warnings.warn(f"dt refined from {dt:g} to {new:g} (sup|mu_n| dt > {STIFFNESS})",
                          StiffnessWarning, stacklevel=2)
            dt = new
        else:
            warnings.warn(f"sup|mu_n| dt = {sup * dt:.3g} exceeds {STIFFNESS}", StiffnessWarning,
                          stacklevel=2)
    noises = ensemble_noise(cfg, dt)
    if drift is None:
        paths = [path_from_noise(z, cfg.x0, cfg.eps_jump, cfg.small_jump_mode) for z in noises]
    else:
        paths = euler_ensemble(noises, cfg.x0, drift, cfg.eps_jump, cfg.small_jump_mode)
    return Ensemble(cfg, dt, paths, {"drift_sup": sup, "level": cfg.n_mollify})


@dataclass(frozen=True)
class CauchyReport:
    levels: tuple
    pairs: tuple  # (n, m)
    distances: np.ndarray  # median over paths of sup_t |A^n - A^m|
    abs_integral: np.ndarray  # per level: max over paths of int |mu_n|(X_s) ds
    dt: float
    passed: bool

    def rows(self):
        return [(n, m, float(d)) for (n, m), d in zip(self.pairs, self.distances)]


def drift_cauchy_report(cfg, mu, levels):
    """Pairwise sup-distances of the drift records across mollification
    levels, all driven by the same noise on a common (stiffness-safe) grid."""
    levels = tuple(int(n) for n in levels)
    drifts = {n: mollify(mu, n) for n in levels} if not mu.is_zero() else {n: None for n in levels}
    sups = [d.sup_abs() if d is not None else 0.0 for d in drifts.values()]
    dt = stable_dt(max(sups), cfg.dt) if cfg.auto_refine else cfg.dt
    # dt must still divide T
    steps = cfg.T / dt
    if abs(steps - round(steps)) > 1e-9 * steps:
        raise ConfigError("refined dt does not divide T")
    noises = ensemble_noise(cfg, dt)
    records, absint = {}, []
    for n in levels:
        d = drifts[n]
        if d is None:
            records[n] = np.zeros((cfg.n_paths, noises[0].n_steps + 1))
            absint.append(0.0)
            continue
        paths = euler_ensemble(noises, cfg.x0, d, cfg.eps_jump, cfg.small_jump_mode)
        records[n] = np.stack([p.drift_record for p in paths])
        X = np.stack([p.values[:-1] for p in paths])
        absint.append(float((np.abs(d(X)) * dt).sum(axis=1).max()))
    pairs = tuple(zip(levels[:-1], levels[1:]))
    dist = np.array([float(np.median(np.abs(records[n] - records[m]).max(axis=1))) for n, m in pairs])
    passed = bool(np.all(dist == 0.0) or np.all(np.diff(dist) < 0.0))
    return CauchyReport(levels, pairs, dist, np.array(absint), dt, passed)
