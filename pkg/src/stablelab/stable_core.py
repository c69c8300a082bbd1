"""Symmetric alpha-stable fundamentals: Levy-measure constants, increment
sampling and jump-resolved path simulation."""

from dataclasses import dataclass, field, replace

import numpy as np
from scipy.special import gamma

SMALL_JUMP_MODES = ("drop", "gaussian-surrogate")


class DomainError(ValueError):
    pass


class ConfigError(ValueError):
    pass


def _c1_formula(a):
    # density constant of |x|^{-1-a} for the symbol |xi|^a, valid for a in (0,2)\{1}
    return a / (2.0 * gamma(1.0 - a) * np.cos(a * np.pi / 2.0))


def levy_constant(alpha):
    """c1(alpha) such that c1 |r|^{-1-alpha} dr has exponent |xi|^alpha."""
    alpha = float(alpha)
    if not 1.0 < alpha < 2.0:
        raise DomainError(f"alpha must lie in (1,2), got {alpha}")
    return float(_c1_formula(alpha))


def potential_constant(alpha):
    """c2(alpha) = 1 / (2 pi c1(alpha-1)), the constant of v(x) = c2 |x|^{alpha-1}."""
    alpha = float(alpha)
    if not 1.0 < alpha < 2.0:
        raise DomainError(f"alpha must lie in (1,2), got {alpha}")
    return float(1.0 / (2.0 * np.pi * _c1_formula(alpha - 1.0)))


@dataclass(frozen=True)
class StableParams:
    alpha: float
    c1: float
    c2: float

    @classmethod
    def from_alpha(cls, alpha):
        return cls(float(alpha), levy_constant(alpha), potential_constant(alpha))

    def exponent(self, xi):
        return np.abs(xi) ** self.alpha

    def levy_density(self, r):
        r = np.abs(np.asarray(r, dtype=float))
        with np.errstate(divide="ignore"):
            return self.c1 * r ** (-1.0 - self.alpha)


def levy_tail_mass(params, eps):
    """Mass of the Levy measure outside [-eps, eps]."""
    if not eps > 0:
        raise DomainError("eps must be positive")
    a = params.alpha
    return 2.0 * params.c1 * eps ** (-a) / a


def small_jump_variance(params, eps):
    """int_{|r|<=eps} r^2 Levy(dr), the variance rate of the Gaussian surrogate."""
    a = params.alpha
    return 2.0 * params.c1 * eps ** (2.0 - a) / (2.0 - a)


def path_rng(seed, index=0):
    """Counter-based generator keyed by (seed, index)."""
    ss = np.random.SeedSequence([int(seed), int(index)])
    return np.random.Generator(np.random.Philox(ss))


def standard_stable(rng, alpha, size=None):
    """Chambers-Mallows-Stuck draw with characteristic function exp(-|xi|^alpha)."""
    v = rng.uniform(-np.pi / 2.0, np.pi / 2.0, size)
    w = rng.exponential(1.0, size)
    return (np.sin(alpha * v) / np.cos(v) ** (1.0 / alpha)
            * (np.cos((1.0 - alpha) * v) / w) ** ((1.0 - alpha) / alpha))


def sample_stable_increment(params, dt, seed, size=None):
    """Increment over a step dt: characteristic function exp(-dt |xi|^alpha)."""
    if not dt > 0:
        raise DomainError("dt must be positive")
    rng = path_rng(seed, 0)
    return dt ** (1.0 / params.alpha) * standard_stable(rng, params.alpha, size)


def sample_jump_sizes(rng, alpha, eps, n):
    # |r| = eps * U^{-1/alpha} inverts the tail (r/eps)^{-alpha}; sign symmetric
    u = 1.0 - rng.uniform(size=n)
    sign = np.where(rng.uniform(size=n) < 0.5, -1.0, 1.0)
    return sign * eps * u ** (-1.0 / alpha)


def sample_jump_times(rng, rate, T):
    """Arrival times of a Poisson clock on [0, T) via exponential gaps."""
    if rate <= 0:
        return np.empty(0)
    out = []
    t = 0.0
    chunk = max(16, int(rate * T * 1.2) + 16)
    while True:
        gaps = rng.exponential(1.0 / rate, chunk)
        times = t + np.cumsum(gaps)
        keep = times[times < T]
        out.append(keep)
        if keep.size < times.size:
            break
        t = times[-1]
    return np.concatenate(out)


@dataclass(frozen=True)
class DrivingNoise:
    """Everything random about one path on a uniform grid.

    gaussian: per-step surrogate increments (zeros in drop mode);
    jump_times/jump_sizes: retained jumps; jump_step: step index whose end
    receives each jump."""

    dt: float
    n_steps: int
    gaussian: np.ndarray
    jump_times: np.ndarray
    jump_sizes: np.ndarray
    jump_step: np.ndarray

    def jump_sum_per_step(self):
        return np.bincount(self.jump_step, weights=self.jump_sizes, minlength=self.n_steps)

    def levy_increments(self):
        return self.gaussian + self.jump_sum_per_step()


def draw_noise(params, T, dt, eps_jump, rng, small_jump_mode="gaussian-surrogate"):
    if small_jump_mode not in SMALL_JUMP_MODES:
        raise ConfigError(f"unknown small_jump_mode {small_jump_mode!r}")
    if not (T > 0 and dt > 0 and eps_jump > 0):
        raise DomainError("T, dt and eps_jump must be positive")
    n_steps = int(round(T / dt))
    if n_steps < 1 or abs(n_steps * dt - T) > 1e-9 * T:
        raise ConfigError("T must be an integer multiple of dt")
    times = sample_jump_times(rng, levy_tail_mass(params, eps_jump), T)
    sizes = sample_jump_sizes(rng, params.alpha, eps_jump, times.size)
    step = np.minimum((times / dt).astype(np.int64), n_steps - 1)
    if small_jump_mode == "gaussian-surrogate":
        sd = np.sqrt(small_jump_variance(params, eps_jump) * dt)
        gauss = sd * rng.standard_normal(n_steps)
    else:
        gauss = np.zeros(n_steps)
    return DrivingNoise(dt, n_steps, gauss, times, sizes, step)


@dataclass(frozen=True)
class JumpPath:
    times: np.ndarray
    values: np.ndarray
    jump_times: np.ndarray
    jump_sizes: np.ndarray
    eps_jump: float
    small_jump_mode: str
    drift_record: np.ndarray
    gaussian: np.ndarray = field(repr=False)
    jump_step: np.ndarray = field(repr=False)

    @property
    def jumps(self):
        return list(zip(self.jump_times.tolist(), self.jump_sizes.tolist()))

    @property
    def dt(self):
        return float(self.times[1] - self.times[0])

    @property
    def x0(self):
        return float(self.values[0])

    def shifted(self, c):
        return replace(self, values=self.values + c)


def simulate_levy_path(params, T, dt, eps_jump, seed, small_jump_mode="gaussian-surrogate",
                       x0=0.0, path_index=0, domain=None):
    """Pure stable path on a uniform grid with retained jumps |r| > eps_jump.

    Jumps are applied at the end of the step containing their arrival time.
    `domain`, when given, is the half-width of the region of interest; a
    truncation threshold at least that large is rejected."""
    if domain is not None and eps_jump >= domain:
        raise ConfigError("eps_jump must be smaller than the domain of interest")
    rng = path_rng(seed, path_index)
    noise = draw_noise(params, T, dt, eps_jump, rng, small_jump_mode)
    return path_from_noise(noise, x0, eps_jump, small_jump_mode)


def path_from_noise(noise, x0, eps_jump, small_jump_mode, drift=None):
    n = noise.n_steps
    times = noise.dt * np.arange(n + 1)
    values = np.empty(n + 1)
    values[0] = x0
    np.cumsum(noise.levy_increments(), out=values[1:])
    values[1:] += x0
    if drift is None:
        drift = np.zeros(n + 1)
    return JumpPath(times, values, noise.jump_times, noise.jump_sizes, float(eps_jump),
                    small_jump_mode, drift, noise.gaussian, noise.jump_step)
