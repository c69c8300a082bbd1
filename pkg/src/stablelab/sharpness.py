"""The boundary drift -C sgn(x)|x|^{1-alpha}: its constant, the defining
integral, the scaling constant c-hat, the truncated measure and the
non-convergence fixture."""

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import binom

from .measures import SignedMeasure, is_kato, modulus_profile
from .quadrature import power_product_rule
from .sde_solver import drift_cauchy_report, simulate_mollified
from .stable_core import DomainError, potential_constant


def check_window(alpha, zeta):
    if not 1.0 < alpha < 2.0:
        raise DomainError(f"alpha must lie in (1,2), got {alpha}")
    if not alpha - 1.0 < zeta < alpha / 2.0:
        raise DomainError(f"zeta must lie in (alpha-1, alpha/2) = ({alpha - 1:g}, {alpha / 2:g}), got {zeta}")


def default_zeta(alpha):
    return 0.5 * ((alpha - 1.0) + alpha / 2.0)


def _power_tail(alpha, zeta, U, sign):
    # int_U^inf (u + sign)^{alpha-2} u^{-zeta} du via the binomial series in 1/u
    e = alpha - 2.0
    total = 0.0
    for k in range(200):
        term = binom(e, k) * sign ** k * U ** (alpha - 1.0 - zeta - k) / (zeta + k + 1.0 - alpha)
        total += term
        if abs(term) < 1e-17 * abs(total):
            break
    return total


def sharpness_integral(alpha, zeta, form="raw", U=8.0):
    """int sgn(u-1) sgn(u) |u-1|^{alpha-2} |u|^{-zeta} du.

    form="raw": three pieces (-inf,0), (0,1), (1,inf) with singular rules on
    [-U, U] and binomial-series tails beyond.
    form="rewritten": the equivalent sum of two positive-form integrals on
    (0, 1) obtained by u -> 1/u on the outer pieces."""
    check_window(alpha, zeta)
    a, z = alpha, zeta
    if form == "raw":
        y, w = power_product_rule(0.0, 1.0, [0.0, 1.0], [-z, a - 2.0])
        mid = np.sum(w)
        y, w = power_product_rule(1.0, U, [1.0], [a - 2.0])
        right = np.sum(w * y ** (-z)) + _power_tail(a, z, U, -1.0)
        y, w = power_product_rule(0.0, U, [0.0], [-z])
        left = np.sum(w * (1.0 + y) ** (a - 2.0)) + _power_tail(a, z, U, +1.0)
        return float(right + left - mid)
    if form == "rewritten":
        # the bracket 1 - u^{alpha-2 zeta} is split so each part carries its own
        # endpoint power; u^{zeta-alpha} u^{alpha-2 zeta} = u^{-zeta}
        y, w = power_product_rule(0.0, 1.0, [0.0, 1.0], [z - a, a - 2.0])
        first = np.sum(w)
        y, w = power_product_rule(0.0, 1.0, [0.0, 1.0], [-z, a - 2.0])
        first -= np.sum(w)
        y, w = power_product_rule(0.0, 1.0, [0.0, 1.0], [z - a, -z])
        second = np.sum(w)
        return float(first + second)
    raise ValueError(f"unknown form {form!r}")


@dataclass(frozen=True)
class SharpnessParams:
    alpha: float
    zeta: float
    C_alpha: float
    c_tilde: float
    I: float

    @classmethod
    def from_alpha(cls, alpha, zeta=None):
        zeta = default_zeta(alpha) if zeta is None else float(zeta)
        check_window(alpha, zeta)
        I = sharpness_integral(alpha, zeta)
        if not (I > 0 and math.isfinite(I)):
            raise DomainError(f"defining integral not positive and finite: {I}")
        c_tilde = (alpha - 1.0) * potential_constant(alpha)
        return cls(float(alpha), zeta, 1.0 / (c_tilde * I), c_tilde, I)


def scaling_integral(alpha, zeta, y, U=16.0):
    """int (|y - z|^{alpha-1} - |z|^{alpha-1}) |z|^{zeta-alpha} dz, computed
    directly in z (singular at 0, cusp at y) with a series tail beyond U|y|."""
    check_window(alpha, zeta)
    y = float(y)
    if y == 0.0:
        return 0.0
    b = alpha - 1.0
    R = U * abs(y)
    pts = sorted({0.0, y})
    exps = [zeta - alpha if p == 0.0 else 0.0 for p in pts]
    zz, w = power_product_rule(-R, R, pts, exps, breaks=(y,))
    body = np.sum(w * (np.abs(y - zz) ** b - np.abs(zz) ** b))
    # both tails together: sum_k 2 binom(b, 2k) y^{2k} R^{zeta-2k} / (2k - zeta)
    tail = 0.0
    for k in range(1, 200):
        term = 2.0 * binom(b, 2 * k) * y ** (2 * k) * R ** (zeta - 2 * k) / (2 * k - zeta)
        tail += term
        if abs(term) < 1e-17 * abs(tail):
            break
    return float(body + tail)


@dataclass(frozen=True)
class HatCReport:
    value: float
    per_sample: dict
    spread: float


def scaling_constant_hat_c(alpha, zeta, y_samples=(0.5, 1.0, 2.0, 5.0)):
    """c-hat(y) = scaling_integral(y) / |y|^zeta for each sample, the mean and
    the relative spread max|c - mean| / |mean|."""
    check_window(alpha, zeta)
    vals = {}
    for y in y_samples:
        if y == 0:
            raise DomainError("y samples must be nonzero")
        vals[float(y)] = scaling_integral(alpha, zeta, y) / abs(y) ** zeta
    arr = np.array(list(vals.values()))
    mean = float(arr.mean())
    return HatCReport(mean, vals, float(np.abs(arr - mean).max() / abs(mean)))


def truncated_sharpness_measure(alpha, zeta=None):
    """-C_alpha sgn(x) |x|^{1-alpha} dx on [-1, 1] as two power pieces."""
    sp = SharpnessParams.from_alpha(alpha, zeta)
    s = alpha - 1.0
    return (SignedMeasure.power(s, coef=-sp.C_alpha, center=0.0, lo=0.0, hi=1.0)
            + SignedMeasure.power(s, coef=sp.C_alpha, center=0.0, lo=-1.0, hi=0.0))


def modulus_trend(nu, eta, r_schedule, center=0.0):
    """Modulus integral at x = center + r^2 for each r: it grows like
    log(1/r) when eta - 1 - s = -1 for a power piece of exponent s at center."""
    out = []
    for r in r_schedule:
        out.append(float(modulus_profile(nu, eta, r, np.array([center + r * r]))[0]))
    return np.array(out)


@dataclass(frozen=True)
class KatoDiagnostics:
    above: object  # verdict for eta = alpha - 1 + margin
    boundary: object  # verdict at eta = alpha - 1
    trend: np.ndarray
    r_schedule: np.ndarray

    @property
    def boundary_diverges(self):
        return (not self.boundary.passed) and bool(np.all(np.diff(self.trend) > 0))


def sharpness_kato_diagnostics(alpha, margin=0.05, r_schedule=None, zeta=None):
    mu = truncated_sharpness_measure(alpha, zeta)
    rs = np.geomspace(0.5, 1e-6, 12) if r_schedule is None else np.asarray(r_schedule)
    above = is_kato(mu, alpha - 1.0 + margin, rs)
    boundary = is_kato(mu, alpha - 1.0, rs)
    return KatoDiagnostics(above, boundary, modulus_trend(mu, alpha - 1.0, rs), rs)


# ---------------------------------------------------------------------------
# non-convergence fixture


def benign_control_measure(alpha, zeta=None, n=401):
    """Smooth compact restoring drift with the same amplitude as the
    truncated measure: -C_alpha x (1 - x^2)^2 on [-1, 1]."""
    C = SharpnessParams.from_alpha(alpha, zeta).C_alpha
    xs = np.linspace(-1.0, 1.0, n)
    return SignedMeasure.table(xs, -C * xs * (1.0 - xs ** 2) ** 2)


@dataclass
class FixtureReport:
    label: str
    levels: tuple
    sharp_distances: np.ndarray
    control_distances: np.ndarray
    control_floor: float
    stalled: bool
    moment_by_level: dict
    dt: float
    meta: dict = field(default_factory=dict)

    def rows(self):
        out = []
        for (n, m), ds, dc in zip(zip(self.levels[:-1], self.levels[1:]), self.sharp_distances,
                                  self.control_distances):
            out.append((n, m, float(ds), float(dc)))
        return out


def nonexistence_fixture(cfg, levels=(2, 3, 4, 5, 6, 7), zeta=None):
    """Level-distance comparison of the truncated boundary drift against a
    smooth control, both started at cfg.x0 with shared noise; plus the
    ensemble mean of |X^n_T|^zeta per level. Expected outcome: the sharp
    distances stall above the control's floor (reported, not asserted)."""
    alpha = cfg.alpha
    zeta = default_zeta(alpha) if zeta is None else zeta
    sharp = truncated_sharpness_measure(alpha, zeta)
    control = benign_control_measure(alpha, zeta)
    rs = drift_cauchy_report(cfg, sharp, levels)
    rc = drift_cauchy_report(cfg, control, levels)
    floor = float(rc.distances[-1])
    tail = rs.distances[-2:]
    stalled = bool(np.all(tail > 2.0 * floor))
    moments = {}
    for n in levels:
        ens = simulate_mollified(_with_level(cfg, n, rs.dt), sharp, dt=rs.dt)
        moments[n] = float(np.mean(np.abs(ens.terminal()) ** zeta))
    return FixtureReport("expected-FAIL: no solution for the boundary drift", tuple(levels),
                         rs.distances, rc.distances, floor, stalled, moments, rs.dt,
                         {"control_passed": rc.passed, "sharp_passed": rs.passed})


def _with_level(cfg, n, dt):
    from dataclasses import replace
    return replace(cfg, n_mollify=int(n), dt=dt, auto_refine=False)
