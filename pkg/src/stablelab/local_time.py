"""Tanaka-formula local time along simulated paths, the kernel occupation
density, drift reconstruction and the Boylan continuity diagnostic."""

import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy.special import binom

from .potentials import renormalized_potential_v, v_prime
from .quadrature import singular_rule
from .stable_core import StableParams


class SingularStepWarning(UserWarning):
    pass


# ---------------------------------------------------------------------------
# compensator of the retained jumps acting on v


def _second_difference_series(alpha, u, terms=400):
    # u > 1: -int_0^1 (|u+s|^b + |u-s|^b - 2 u^b) s^{-1-a} ds, expanded in s/u
    b = alpha - 1.0
    u = np.asarray(u, dtype=float)
    out = np.zeros_like(u)
    for k in range(1, terms + 1):
        term = 2.0 * binom(b, 2 * k) * u ** (b - 2 * k) / (2 * k - alpha)
        out -= term
        if np.all(np.abs(term) < 1e-17 * np.abs(out)):
            break
    return out


def _second_difference(u, s, b):
    """(u+s)^b + (u-s)^b - 2 u^b for 0 <= s < u, series in s/u where it cancels."""
    x = s / u
    small = x < 0.2
    out = (u + s) ** b + np.abs(u - s) ** b - 2.0 * u ** b
    xs = x[small]
    ser = np.zeros_like(xs)
    for k in range(1, 16):
        ser += 2.0 * binom(b, 2 * k) * xs ** (2 * k)
    out[small] = u ** b * ser
    return out


def _second_difference_quad(alpha, u):
    b = alpha - 1.0
    if u <= 1.0:
        # int_1^inf, graded towards s = 1 (cusp of |u - s|^b when u -> 1)
        s, w = singular_rule(1.0, 2.0, 0.0, 0.0, panels=24, ratio=0.35, order=16)
        sd = (u + s) ** b + np.abs(u - s) ** b - 2.0 * u ** b
        head = float(np.sum(w * sd * s ** (-1.0 - alpha)))
        # s in [2, inf): substitute s = 2 / t, t in (0, 1]
        t, wt = singular_rule(0.0, 1.0, 0.0, 0.0, panels=12, ratio=0.3, order=16)
        s = 2.0 / t
        sd = (u + s) ** b + (s - u) ** b - 2.0 * u ** b
        tail = float(np.sum(wt * sd * s ** (-1.0 - alpha) * 2.0 / t ** 2))
        return head + tail
    s, w = singular_rule(0.0, 1.0, 0.0, 0.0, panels=24, ratio=0.35, order=16)
    sd = _second_difference(u, s, b)
    return -float(np.sum(w * sd * s ** (-1.0 - alpha)))


@dataclass(frozen=True)
class CompensatorTable:
    """F_eps(y) = c1 int_{|r|>eps} (v(y+r) - v(y)) |r|^{-1-alpha} dr
    = (c1 c2 / eps) G(|y| / eps)."""

    alpha: float
    u: np.ndarray
    G: np.ndarray
    u_switch: float = 2.0

    def profile(self, u):
        u = np.abs(np.asarray(u, dtype=float))
        out = np.interp(u, self.u, self.G)
        far = u > self.u_switch
        if np.any(far):
            out[far] = _second_difference_series(self.alpha, u[far])
        return out

    def __call__(self, params, eps, y):
        return params.c1 * params.c2 / eps * self.profile(np.asarray(y) / eps)


@lru_cache(maxsize=16)
def compensator_table(alpha, n=1500):
    # clustered at 0 (|u|^b cusp) and at 1 (cutoff meets the cusp)
    a = np.linspace(0.0, 1.0, n // 2) ** 3
    u = np.unique(np.concatenate([a, 1.0 - a, 1.0 + a[a <= 1.0]]))
    G = np.array([_second_difference_quad(alpha, x) for x in u])
    return CompensatorTable(float(alpha), u, G)


# ---------------------------------------------------------------------------
# occupation density


def epanechnikov(z):
    z = np.asarray(z, dtype=float)
    return np.where(np.abs(z) < 1.0, 0.75 * (1.0 - z * z), 0.0)


def occupation_density(path, x_nodes, t, bandwidth):
    """ell_t^x ~ sum_{s_k < t} K_bw(X_{s_k} - x) dt (left-point sums)."""
    if not bandwidth > 0:
        raise ValueError("bandwidth must be positive")
    x_nodes = np.atleast_1d(np.asarray(x_nodes, dtype=float))
    dt = path.dt
    k = int(round(t / dt))
    X = path.values[:k]
    out = np.zeros(x_nodes.size)
    # sort once; only samples within a bandwidth contribute
    Xs = np.sort(X)
    for i, x in enumerate(x_nodes):
        lo, hi = np.searchsorted(Xs, [x - bandwidth, x + bandwidth])
        out[i] = epanechnikov((Xs[lo:hi] - x) / bandwidth).sum() * dt / bandwidth
    return out


def occupation_integral(path, f, t):
    k = int(round(t / path.dt))
    return float(np.sum(f(path.values[:k])) * path.dt)


# ---------------------------------------------------------------------------
# Tanaka local time


@dataclass
class TanakaTrace:
    x: float
    gamma: np.ndarray
    N: np.ndarray
    clipped_mass: float
    near_hits: int
    quadratic_variation: float


def _pre_jump_states(path):
    """States just before each retained jump (jumps in one step applied in
    time order at the step end)."""
    X = path.values
    sizes, step = path.jump_sizes, path.jump_step
    if sizes.size == 0:
        return np.empty(0)
    drift_inc = np.diff(path.drift_record)
    pre = X[:-1] + drift_inc + path.gaussian  # X_{k+1}^- before any jump
    csum = np.cumsum(sizes)
    before = csum - sizes
    first = np.searchsorted(step, step, side="left")
    before_in_step = before - before[first]
    return pre[step] + before_in_step


def tanaka_local_time(path, x, params, h_min=None, warn=True):
    """gamma_s^x on the path grid from v(X - x), the drift increments and
    the compensated jump martingale N^x.

    Per step: gamma increment = v(Y^-) - v(Y) - v'_c(Y)(dA + dG) + F_eps(Y) dt
    where Y = X_k - x, Y^- the pre-jump state, v'_c the derivative clipped
    at |Y| >= h_min, F_eps the compensator of the retained jumps. N collects
    the retained-jump v-differences, minus the compensator, plus v'_c dG."""
    params = params if isinstance(params, StableParams) else StableParams.from_alpha(params)
    X = path.values
    dt = path.dt
    if h_min is None:
        h_min = max(path.eps_jump, 1e-12)
    n = X.size - 1
    Y = X[:-1] - x
    dA = np.diff(path.drift_record)
    dG = path.gaussian
    Ym = Y + dA + dG
    vY = renormalized_potential_v(params, Y)
    absY = np.abs(Y)
    clipped = absY < h_min
    vp = v_prime(params, np.where(clipped, np.where(Y >= 0, h_min, -h_min), Y))
    vp_true = v_prime(params, Y)
    clipped_mass = float(np.sum(np.abs(vp_true - vp) * np.abs(dA + dG)))
    comp = compensator_table(params.alpha)(params, path.eps_jump, Y) * dt
    inc = renormalized_potential_v(params, Ym) - vY - vp * (dA + dG) + comp
    # martingale part
    dN = vp * dG - comp
    if path.jump_sizes.size:
        pre = _pre_jump_states(path) - x
        dv = renormalized_potential_v(params, pre + path.jump_sizes) - renormalized_potential_v(params, pre)
        dN = dN + np.bincount(path.jump_step, weights=dv, minlength=n)
    gamma = np.concatenate([[0.0], np.cumsum(inc)])
    N = np.concatenate([[0.0], np.cumsum(dN)])
    near = int(clipped.sum())
    if warn and near and clipped_mass > 1e-2:
        warnings.warn(f"{near} steps within h_min={h_min:g} of x={x:g}; clipped mass {clipped_mass:.3g}",
                      SingularStepWarning, stacklevel=2)
    return TanakaTrace(float(x), gamma, N, clipped_mass, near, float(np.sum(dN ** 2)))


# ---------------------------------------------------------------------------
# field assembly


@dataclass
class LocalTimeField:
    x_nodes: np.ndarray
    checkpoints: np.ndarray
    gamma: np.ndarray  # (t, x)
    ell: np.ndarray  # (t, x)
    martingale_part: np.ndarray  # (t, x)
    domain_flags: np.ndarray  # per x: True when a finiteness diagnostic is suspect
    diagnostics: dict = field(default_factory=dict)

    def rows(self):
        out = []
        for i, t in enumerate(self.checkpoints):
            for j, x in enumerate(self.x_nodes):
                out.append((float(t), float(x), float(self.gamma[i, j]), float(self.ell[i, j]),
                            float(self.martingale_part[i, j])))
        return out


def local_time_field(path, x_nodes, checkpoints, params, bandwidth, h_min=None, qv_flag=100.0):
    """gamma, ell and N on x_nodes at the checkpoint times for one path.

    Domain flags mark x whose martingale quadratic variation exceeds
    qv_flag times the median over x (a blow-up proxy); nothing is zeroed."""
    x_nodes = np.asarray(x_nodes, dtype=float)
    checkpoints = np.asarray(checkpoints, dtype=float)
    idx = np.rint(checkpoints / path.dt).astype(int)
    G = np.zeros((checkpoints.size, x_nodes.size))
    L = np.zeros_like(G)
    N = np.zeros_like(G)
    qv = np.zeros(x_nodes.size)
    clipped = np.zeros(x_nodes.size)
    for j, x in enumerate(x_nodes):
        tr = tanaka_local_time(path, x, params, h_min, warn=False)
        G[:, j] = tr.gamma[idx]
        N[:, j] = tr.N[idx]
        qv[j] = tr.quadratic_variation
        clipped[j] = tr.clipped_mass
    for i, t in enumerate(checkpoints):
        L[i] = occupation_density(path, x_nodes, t, bandwidth)
    med = np.median(qv[qv > 0]) if np.any(qv > 0) else 0.0
    flags = (qv > qv_flag * med) if med > 0 else np.zeros(x_nodes.size, bool)
    return LocalTimeField(x_nodes, checkpoints, G, L, N, flags,
                          {"quadratic_variation": qv.tolist(), "clipped_mass": clipped.tolist(),
                           "bandwidth": bandwidth})


@dataclass
class EnsembleField:
    mean: LocalTimeField
    gamma_sd: np.ndarray
    ell_sd: np.ndarray
    N_sd: np.ndarray
    n_paths: int


def ensemble_field(paths, x_nodes, checkpoints, params, bandwidth, h_min=None, threads=1):
    """Per-path fields and their ensemble mean and spread. Paths are
    independent; with threads > 1 they are mapped over a thread pool and
    collected in path order, so the result does not depend on threads."""
    def one(p):
        return local_time_field(p, x_nodes, checkpoints, params, bandwidth, h_min)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            fields = list(pool.map(one, paths))
    else:
        fields = [one(p) for p in paths]
    stack = lambda name: np.stack([getattr(f, name) for f in fields])
    g, l, n = stack("gamma"), stack("ell"), stack("martingale_part")
    flags = np.any(stack("domain_flags"), axis=0)
    diag = {"clipped_mass": np.sum([f.diagnostics["clipped_mass"] for f in fields], axis=0).tolist(),
            "bandwidth": bandwidth}
    mean = LocalTimeField(np.asarray(x_nodes, float), np.asarray(checkpoints, float), g.mean(0),
                          l.mean(0), n.mean(0), flags, diag)
    ddof = 1 if len(paths) > 1 else 0
    return EnsembleField(mean, g.std(0, ddof=ddof), l.std(0, ddof=ddof), n.std(0, ddof=ddof), len(paths))


def drift_from_local_time(field, mu, t):
    """int gamma_t^x mu(dx): gamma interpolated linearly in x (exact at atoms
    placed on nodes), integrated piecewise against mu."""
    if mu.is_zero():
        return 0.0
    i = int(np.argmin(np.abs(field.checkpoints - t)))
    g = field.gamma[i]
    xs = field.x_nodes
    for a, _ in mu.atoms:
        j = np.searchsorted(xs, a)
        on = j < xs.size and xs[j] == a
        if not on:
            warnings.warn(f"atom at {a} is not an x-node; gamma interpolated", SingularStepWarning,
                          stacklevel=2)
    lo, hi = mu.support()
    if lo < xs[0] or hi > xs[-1]:
        raise ValueError("x-nodes must cover the support of mu")
    return float(mu.integrate(lambda x: np.interp(x, xs, g)))


# ---------------------------------------------------------------------------
# Boylan continuity diagnostic


def admissibility_terms(g, n_max=1000):
    """Terms n g(2^{-n})^{1/2} of the admissibility series, n = 1..n_max."""
    n = np.arange(1, n_max + 1)
    return n * np.sqrt(np.maximum(g(2.0 ** -n), 0.0))


def admissibility_partial_sums(g, n_max=1000):
    return np.cumsum(admissibility_terms(g, n_max))


def admissible(g, n_max=1000, min_rate=5e-3, min_power=1.05):
    """Convergence of sum n g(2^{-n})^{1/2} judged from the tail of its
    terms: geometric decay at a rate >= min_rate per term (well above the 1/n
    slope of a harmonic tail on the fit range), or power decay
    n^{-p} with p >= min_power, fitted over the second half."""
    terms = admissibility_terms(g, n_max)
    if not np.all(np.isfinite(terms)):
        return False
    tail = terms[n_max // 2:]
    if np.all(tail == 0.0):
        return True
    if np.any(tail <= 0.0):
        return False
    n = np.arange(n_max // 2 + 1, n_max + 1)
    geo = np.polyfit(n, np.log(tail), 1)[0]
    power = np.polyfit(np.log(n), np.log(tail), 1)[0]
    return bool(geo <= -min_rate or power <= -min_power)


@dataclass(frozen=True)
class BoylanReport:
    passed: bool
    admissible: bool
    violations: int
    pairs: int
    partial_sum: float
    worst_ratio: float


def boylan_check(kernel, nodes, g, within=None):
    """Check |w(x,y) - w(x,x)| < g(|x-y|) and |w(y,x) - w(x,x)| < g(|x-y|)
    on all node pairs with 0 < |x-y| <= within, plus admissibility of g.

    kernel: (n, n) table w(x_i, x_j) on the given nodes."""
    kernel = np.asarray(kernel, dtype=float)
    nodes = np.asarray(nodes, dtype=float)
    d = np.abs(nodes[:, None] - nodes[None, :])
    mask = d > 0
    if within is not None:
        mask &= d <= within
    diag = np.diag(kernel)
    gap1 = np.abs(kernel - diag[:, None])  # w(x,y) - w(x,x)
    gap2 = np.abs(kernel.T - diag[:, None])  # w(y,x) - w(x,x)
    bound = np.asarray(g(np.where(mask, d, 1.0)), dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(mask, np.maximum(gap1, gap2) / bound, 0.0)
    bad = int(np.sum(mask & ((gap1 >= bound) | (gap2 >= bound))))
    sums = admissibility_partial_sums(g)
    adm = admissible(g)
    return BoylanReport(bool(bad == 0 and adm), adm, bad, int(mask.sum()), float(sums[-1]),
                        float(np.nanmax(ratio)) if mask.any() else 0.0)


def default_boylan_g(alpha, C=1.0):
    return lambda x: C * np.asarray(x, dtype=float) ** ((alpha - 1.0) / 2.0)
