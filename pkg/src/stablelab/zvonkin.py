"""Zvonkin transform: resolvent solution w, the map phi = id + w, its inverse,
and the coefficients of the transformed jump equation with their audits."""

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import CubicHermiteSpline

from .potentials import (NonContractionError, NodeMeasure, _params, _term_ratio, gradient_matrix,
                         node_measure, potential_matrix, potential_table, series_masses)
from .quadrature import gauss_legendre
from .stable_core import DomainError


class MonotonicityError(RuntimeError):
    pass


class OutOfGridError(ValueError):
    pass


def _window(mu, lam, alpha, pad_lengths=5.0):
    lo, hi = mu.support()
    pad = pad_lengths * max(1.0, lam ** (-1.0 / alpha))
    return lo - pad, hi + pad


@dataclass
class ZvonkinTransform:
    params: object
    lam: float
    x: np.ndarray
    w: np.ndarray
    w_prime: np.ndarray
    eps0: float
    ratio: float
    K: int
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self._spline = CubicHermiteSpline(self.x, self.w, self.w_prime, extrapolate=False)
        self._dspline = self._spline.derivative()
        self._phi_nodes = self.x + self.w
        slopes = 1.0 + self.w_prime
        # a non-monotone phi (possible with strict=False) has no inverse
        monotone = np.all(slopes > 0) and np.all(np.diff(self._phi_nodes) > 0)
        self._inv = (CubicHermiteSpline(self._phi_nodes, self.x, 1.0 / slopes, extrapolate=False)
                     if monotone else None)

    # -- w, w' with linear tails ---------------------------------------------

    @property
    def lo(self):
        return float(self.x[0])

    @property
    def hi(self):
        return float(self.x[-1])

    def w_at(self, y):
        y = np.asarray(y, dtype=float)
        out = self._spline(np.clip(y, self.lo, self.hi))
        left, right = y < self.lo, y > self.hi
        out = np.where(left, self.w[0] + self.w_prime[0] * (y - self.lo), out)
        return np.where(right, self.w[-1] + self.w_prime[-1] * (y - self.hi), out)

    def w_prime_at(self, y):
        y = np.asarray(y, dtype=float)
        out = self._dspline(np.clip(y, self.lo, self.hi))
        out = np.where(y < self.lo, self.w_prime[0], out)
        return np.where(y > self.hi, self.w_prime[-1], out)

    def phi(self, y, strict=False):
        y = np.asarray(y, dtype=float)
        if strict and np.any((y < self.lo) | (y > self.hi)):
            raise OutOfGridError("phi evaluated outside the tabulated window")
        return y + self.w_at(y)

    def phi_inv(self, z, strict=False, newton=4):
        """Inverse of phi by a spline guess refined with safeguarded Newton."""
        if self._inv is None:
            raise MonotonicityError("phi is not monotone on the grid; no inverse")
        z = np.asarray(z, dtype=float)
        p0, p1 = self._phi_nodes[0], self._phi_nodes[-1]
        if strict and np.any((z < p0) | (z > p1)):
            raise OutOfGridError("phi_inv evaluated outside the tabulated window")
        inside = (z >= p0) & (z <= p1)
        zc = np.clip(z, p0, p1)
        idx = np.clip(np.searchsorted(self._phi_nodes, zc) - 1, 0, self.x.size - 2)
        a, b = self.x[idx], self.x[idx + 1]
        y = np.clip(self._inv(zc), a, b)
        for _ in range(newton):
            f = y + self._spline(y) - zc
            y = np.clip(y - f / (1.0 + self._dspline(y)), a, b)
        # linear tails
        y = np.where(z < p0, self.lo + (z - p0) / (1.0 + self.w_prime[0]), y)
        y = np.where(z > p1, self.hi + (z - p1) / (1.0 + self.w_prime[-1]), y)
        return np.where(inside | (z < p0) | (z > p1), y, y)

    def lipschitz_bounds(self):
        """(1 - eps0, 1 + eps0): sandwich constants for phi."""
        return 1.0 - self.eps0, 1.0 + self.eps0

    # -- transformed coefficients ------------------------------------------

    def b(self, z):
        return self.w_at(self.phi_inv(z))

    def sigma(self, z, r):
        y = self.phi_inv(z)
        return self.w_at(y + np.asarray(r)) - self.w_at(y)

    def g(self, z, r):
        z = np.asarray(z, dtype=float)
        r = np.asarray(r, dtype=float)
        return self.phi_inv(z + r) - self.phi_inv(z)

    def m(self, z, r, form="exact"):
        """Jump-intensity factor after the change of variables.

        form="exact" uses the Jacobian 1 / (1 + w'(phi^{-1}(z + r)));
        form="shifted" uses (1 + w'(phi^{-1}(z) + r)) as multiplier."""
        z = np.asarray(z, dtype=float)
        r = np.asarray(r, dtype=float)
        g = self.g(z, r)
        a = self.params.alpha
        with np.errstate(divide="ignore", invalid="ignore"):
            ratio = np.where(r == 0.0, 1.0 / (1.0 + self.w_prime_at(self.phi_inv(z))), np.abs(r / g))
        if form == "exact":
            jac = 1.0 / (1.0 + self.w_prime_at(self.phi_inv(z + r)))
        elif form == "shifted":
            jac = 1.0 + self.w_prime_at(self.phi_inv(z) + r)
        else:
            raise ValueError(f"unknown form {form!r}")
        return ratio ** (1.0 + a) * jac

    def indicator_roots(self, z):
        """r-bounds of {|g(z, r)| < 1}: (phi(y - 1) - z, phi(y + 1) - z), y = phi^{-1}(z)."""
        y = self.phi_inv(z)
        return self.phi(y - 1.0) - z, self.phi(y + 1.0) - z

    def second_difference_integral(self, y, lo, order=8):
        """int_lo^inf (w(y+r) + w(y-r) - 2 w(y)) r^{-1-alpha} dr, lo > 0, for each y."""
        y = np.atleast_1d(np.asarray(y, dtype=float))
        a = self.params.alpha
        R = max(self.hi - y.min(), y.max() - self.lo, lo) + 1.0
        r, wr = _tail_rule(lo, R, self.x[1] - self.x[0], order)
        wy = self.w_at(y)
        sd = self.w_at(y[:, None] + r[None, :]) + self.w_at(y[:, None] - r[None, :]) - 2.0 * wy[:, None]
        body = sd @ (wr * r ** (-1.0 - a))
        # beyond R both points are on the linear tails: A + B r
        A = (self.w[-1] + self.w_prime[-1] * (y - self.hi) + self.w[0] + self.w_prime[0] * (y - self.lo)
             - 2.0 * wy)
        B = self.w_prime[-1] - self.w_prime[0]
        tail = A * R ** (-a) / a + B * R ** (1.0 - a) / (a - 1.0)
        return body + tail

    def a(self, z, form="exact", order=16):
        """Drift of the rewritten generator: lam b - int_{|r|>=1} sigma pi + indicator correction."""
        z = np.atleast_1d(np.asarray(z, dtype=float))
        p = self.params
        y = self.phi_inv(z)
        big = p.c1 * self.second_difference_integral(y, 1.0)
        rm, rp = self.indicator_roots(z)
        g, gw = gauss_legendre(0.0, 1.0, order)
        corr = np.zeros_like(z)
        for lo, hi in ((np.ones_like(z), rp), (rm, -np.ones_like(z))):
            # signed integral from lo to hi of m(z, r) |r|^{-1-alpha}
            rr = lo[:, None] + (hi - lo)[:, None] * g[None, :]
            f = self.m(z[:, None], rr, form) * np.abs(rr) ** (-1.0 - p.alpha)
            corr += (hi - lo) * (f @ gw)
        return self.lam * self.w_at(y) - big + p.c1 * corr

    def compensator_table(self, eps, order=8):
        """C_eps(y) = c1 int_{|r|>eps} (w(y+r) - w(y)) |r|^{-1-alpha} dr on the grid."""
        vals = np.concatenate([self.params.c1 * self.second_difference_integral(chunk, eps, order)
                               for chunk in np.array_split(self.x, max(1, self.x.size // 256))])
        return vals

    def to_rows(self):
        return np.column_stack([self.x, self.w, self.w_prime, self.x + self.w])


def _tail_rule(lo, R, h, order):
    """Nodes on [lo, R]: geometric panels up to 4h, then panels of width 4h."""
    g, gw = gauss_legendre(0.0, 1.0, order)
    edges = [lo]
    mid = max(4.0 * h, lo)
    if mid > lo:
        edges = list(np.geomspace(lo, mid, int(np.ceil(np.log2(mid / lo))) + 2))
    n = int(np.ceil((R - mid) / (4.0 * h)))
    edges = np.unique(np.concatenate([edges, np.linspace(mid, R, max(n, 1) + 1)]))
    d = np.diff(edges)
    nodes = edges[:-1, None] + d[:, None] * g[None, :]
    return nodes.ravel(), (d[:, None] * gw[None, :]).ravel()


def identity_transform(params, lam, lo=-5.0, hi=5.0, h=0.05):
    x = np.arange(lo, hi + 0.5 * h, h)
    z = np.zeros_like(x)
    return ZvonkinTransform(_params(params), lam, x, z, z.copy(), 0.0, 0.0, 0)


def solve_resolvent(params, mu, lam, h=0.01, K_max=200, tol=1e-14, pad_lengths=5.0, strict=True):
    """Tabulate w = W_lam^mu mu (the bounded solution of the resolvent
    equation) and w' on a uniform window around supp(mu)."""
    params = _params(params)
    if not lam > 0:
        raise DomainError("lambda must be positive")
    if mu.is_zero():
        return identity_transform(params, lam)
    tab = potential_table(params.alpha)
    lo, hi = _window(mu, lam, params.alpha, pad_lengths)
    x = h * np.arange(math.floor(lo / h), math.ceil(hi / h) + 1)
    nm = node_measure(mu, h)
    qs = series_masses(tab, lam, nm, nm, K_max, tol=tol * max(nm.w.__abs__().sum(), 1.0))
    U = potential_matrix(tab, lam, x, nm)
    G = gradient_matrix(tab, lam, x, nm)
    sups = np.array([np.abs(U @ q).max() for q in qs])
    Q = np.sum(qs, axis=0)
    w, wp = U @ Q, G @ Q
    ratio = _term_ratio(sups, False)
    if strict and ratio >= 1.0:
        raise NonContractionError(f"series term ratio {ratio:.3f} >= 1 at lambda={lam}")
    # eps0 on the nodes and between them
    zt = ZvonkinTransform(params, float(lam), x, w, wp, 0.0, ratio, len(qs) - 1,
                          {"h": h, "term_sups": sups.tolist()})
    mids = 0.5 * (x[1:] + x[:-1])
    zt.eps0 = float(max(np.abs(wp).max(), np.abs(zt.w_prime_at(mids)).max()))
    zt.meta["source"] = NodeMeasure(nm.x, Q, nm.h, nm.cells)
    if strict and zt.eps0 >= 1.0:
        raise MonotonicityError(f"sup|w'| = {zt.eps0:.3f} >= 1; increase lambda")
    return zt


def critical_lambda(params, mu, lam0=0.5, target=0.5, max_doublings=24, h=0.01):
    """Smallest lambda on a doubling schedule with eps0 < target and a
    contracting series; returns (lambda, table of (lambda, eps0, ratio))."""
    lam = lam0
    table = []
    for _ in range(max_doublings):
        zt = solve_resolvent(params, mu, lam, h=h, strict=False)
        table.append((lam, zt.eps0, zt.ratio))
        if zt.eps0 < target and zt.ratio < 1.0:
            return lam, table
        lam *= 2.0
    raise NonContractionError("no admissible lambda on the doubling schedule")


def m_bounds(eps0, alpha):
    """Sandwich for m in terms of eps0."""
    return (1.0 - eps0) ** (1.0 + alpha) * (1.0 - eps0), (1.0 - eps0) ** (-(1.0 + alpha)) * (1.0 + eps0)


# ---------------------------------------------------------------------------
# fractional Laplacian and resolvent residual


def fractional_laplacian(f, d2f, x, alpha, c1, h, R=None, inner=None, order=8):
    """Delta_alpha f(x) = c1 int_0^inf (f(x+r) + f(x-r) - 2 f(x)) r^{-1-alpha} dr.

    For r < inner the second difference is replaced by f''(x) r^2; beyond R
    f is treated as constant (callers pass R well outside the support of f's
    variation, with a closed-form tail)."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    inner = h if inner is None else inner
    R = 50.0 if R is None else R
    r, wr = _tail_rule(inner, R, h, order)
    fx = f(x)
    sd = f(x[:, None] + r[None, :]) + f(x[:, None] - r[None, :]) - 2.0 * fx[:, None]
    body = sd @ (wr * r ** (-1.0 - alpha))
    near = d2f(x) * inner ** (2.0 - alpha) / (2.0 - alpha)
    far = (f(np.full(1, x.max() + 2 * R))[0] + f(np.full(1, x.min() - 2 * R))[0] - 2.0 * fx) * R ** (-alpha) / alpha
    return c1 * (near + body + far)


def resolvent_residual(zt, density, xs, R=None):
    """lam w - Delta_alpha w - density * w' - density at xs, for a transform
    built from a measure with the given (smooth) density function."""
    h = zt.x[1] - zt.x[0]
    spline = zt._spline
    d2 = spline.derivative(2)

    def d2f(y):
        return np.asarray(d2(np.clip(y, zt.lo, zt.hi)))

    lap = fractional_laplacian(zt.w_at, d2f, xs, zt.params.alpha, zt.params.c1, h,
                               R=R if R is not None else 2.0 * (zt.hi - zt.lo), inner=h)
    dens = density(np.asarray(xs))
    return zt.lam * zt.w_at(xs) - lap - dens * zt.w_prime_at(xs) - dens


# ---------------------------------------------------------------------------
# Hoelder audit


@dataclass(frozen=True)
class HolderReport:
    exponent: float
    stderr: float
    intercept: float
    delta: float
    passed: bool
    separations: np.ndarray
    sup_lhs: np.ndarray


def holder_lhs(zt, x, y, r, form="exact"):
    """|m(x,r) - m(y,r)| + |a(x) - a(y)| for arrays of x, y (same shape) and scalar r."""
    x = np.atleast_1d(np.asarray(x, float))
    y = np.atleast_1d(np.asarray(y, float))
    out = np.abs(zt.m(x, r, form) - zt.m(y, r, form)) + np.abs(zt.a(x, form) - zt.a(y, form))
    return np.where(x == y, 0.0, out)


def holder_audit(zt, delta, base_points, r_values, separations, form="exact"):
    """Log-log regression of the sup over (x, r) of the Hoelder left side
    against the separation |x - y|."""
    base = np.asarray(base_points, float)
    seps = np.asarray(separations, float)
    sup = np.zeros(seps.size)
    a0 = zt.a(base, form)
    for i, d in enumerate(seps):
        a1 = zt.a(base + d, form)
        da = np.abs(a1 - a0)
        for r in r_values:
            dm = np.abs(zt.m(base, r, form) - zt.m(base + d, r, form))
            sup[i] = max(sup[i], float((dm + da).max()))
    # a vanishing drift leaves only roundoff in the left side
    if np.all(sup <= 1e-12):
        return HolderReport(math.inf, 0.0, -math.inf, delta, True, seps, sup)
    keep = sup > 0
    X, Y = np.log(seps[keep]), np.log(sup[keep])
    A = np.column_stack([X, np.ones_like(X)])
    coef, res, *_ = np.linalg.lstsq(A, Y, rcond=None)
    dof = max(X.size - 2, 1)
    s2 = float(np.sum((Y - A @ coef) ** 2)) / dof
    cov = s2 * np.linalg.inv(A.T @ A)
    slope, icpt = float(coef[0]), float(coef[1])
    passed = slope >= delta - 0.05 and np.isfinite(icpt)
    return HolderReport(slope, float(math.sqrt(cov[0, 0])), icpt, delta, bool(passed), seps, sup)


# ---------------------------------------------------------------------------
# simulation in the transformed coordinate


@dataclass(frozen=True)
class TransformedEnsemble:
    times: np.ndarray
    W: np.ndarray  # (n_steps + 1, n_paths)
    X: np.ndarray  # phi^{-1}(W)
    meta: dict = field(default_factory=dict)

    def terminal(self):
        return self.X[-1].copy()


def simulate_transformed(zt, noises, x0, eps_jump, pad=20.0):
    """Euler scheme for W = phi(X), which needs no drift evaluation:

        dW = (lam w(Y) - C_eps(Y)) dt + (1 + w'(Y)) dG,   Y = phi^{-1}(W),

    and each retained jump r maps W to phi(Y + r). C_eps is the truncated
    jump generator applied to w; the Gaussian surrogate term 0.5 s^2 w''
    is the part of the full generator that dG supplies by Ito's formula.
    Jumps falling in the same step are applied as their sum."""
    n, dt = noises[0].n_steps, noises[0].dt
    eps = float(eps_jump)
    h = float(zt.x[1] - zt.x[0])
    grid = np.arange(zt.lo - pad, zt.hi + pad + 0.5 * h, h)
    comp = np.concatenate([zt.params.c1 * zt.second_difference_integral(c, eps)
                           for c in np.array_split(grid, max(1, grid.size // 256))])
    G = np.stack([z.gaussian for z in noises], axis=1)
    J = np.stack([z.jump_sum_per_step() for z in noises], axis=1)
    P = len(noises)
    W = np.empty((n + 1, P))
    W[0] = zt.phi(np.full(P, float(x0)))
    w = W[0].copy()
    for k in range(n):
        y = zt.phi_inv(w)
        drift = zt.lam * zt.w_at(y) - np.interp(y, grid, comp)
        w = w + drift * dt + (1.0 + zt.w_prime_at(y)) * G[k]
        jumped = J[k] != 0.0
        if np.any(jumped):
            yj = zt.phi_inv(w[jumped])
            w[jumped] = zt.phi(yj + J[k, jumped])
        W[k + 1] = w
    X = zt.phi_inv(W)
    return TransformedEnsemble(dt * np.arange(n + 1), W, X, {"eps": eps, "pad": pad})
