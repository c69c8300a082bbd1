"""Finite signed measures on the line (atoms, power-law pieces, tabulated
densities) with Kato-class diagnostics, mollification and heat-kernel
Besov proxies."""

import json
import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy.integrate import quad
from scipy.signal import fftconvolve

from .quadrature import gauss_legendre, power_product_rule, singular_rule

DIVERGENT = math.inf


class DivergenceError(ValueError):
    pass


@dataclass(frozen=True)
class PowerPiece:
    """coef * |x - center|^{-s} dx on [lo, hi]."""

    coef: float
    center: float
    s: float
    lo: float
    hi: float

    def antiderivative(self, y):
        # integral of |y - c|^{-s} from c to y (signed)
        d = np.asarray(y, dtype=float) - self.center
        return np.sign(d) * np.abs(d) ** (1.0 - self.s) / (1.0 - self.s)

    def mass_between(self, a, b):
        a = np.clip(a, self.lo, self.hi)
        b = np.clip(b, self.lo, self.hi)
        return self.coef * (self.antiderivative(b) - self.antiderivative(a))

    def density(self, x):
        x = np.asarray(x, dtype=float)
        inside = (x >= self.lo) & (x <= self.hi)
        with np.errstate(divide="ignore"):
            val = self.coef * np.abs(x - self.center) ** (-self.s)
        return np.where(inside, val, 0.0)

    def singular_in_support(self):
        return self.s > 0 and self.lo <= self.center <= self.hi and self.coef != 0.0


@dataclass(frozen=True)
class TablePiece:
    """Piecewise-linear density through (xs, ys), zero outside [xs[0], xs[-1]]."""

    xs: tuple
    ys: tuple

    @property
    def x(self):
        return np.asarray(self.xs, dtype=float)

    @property
    def y(self):
        return np.asarray(self.ys, dtype=float)

    @property
    def lo(self):
        return float(self.xs[0])

    @property
    def hi(self):
        return float(self.xs[-1])

    def density(self, x):
        return np.interp(x, self.x, self.y, left=0.0, right=0.0)

    def cdf(self, q):
        """int_{lo}^{q} density, exact for the piecewise-linear interpolant."""
        xs, ys = self.x, self.y
        seg = np.concatenate([[0.0], np.cumsum(0.5 * (ys[1:] + ys[:-1]) * np.diff(xs))])
        q = np.clip(np.asarray(q, dtype=float), xs[0], xs[-1])
        k = np.clip(np.searchsorted(xs, q, side="right") - 1, 0, len(xs) - 2)
        d = q - xs[k]
        slope = (ys[k + 1] - ys[k]) / (xs[k + 1] - xs[k])
        return seg[k] + ys[k] * d + 0.5 * slope * d * d

    def absolute(self):
        """|density| as another exact piecewise-linear table (zero crossings inserted)."""
        xs, ys = list(self.xs), list(self.ys)
        out_x, out_y = [xs[0]], [abs(ys[0])]
        for i in range(len(xs) - 1):
            y0, y1 = ys[i], ys[i + 1]
            if y0 * y1 < 0:
                xc = xs[i] + (xs[i + 1] - xs[i]) * y0 / (y0 - y1)
                out_x.append(xc)
                out_y.append(0.0)
            out_x.append(xs[i + 1])
            out_y.append(abs(y1))
        return TablePiece(tuple(out_x), tuple(out_y))

    def positive(self):
        t = self.absolute()
        # |f| and f agree in sign pattern; f+ = (|f| + f)/2 on the refined nodes
        f = self.density(t.x)
        return TablePiece(t.xs, tuple(0.5 * (t.y + f)))


@dataclass(frozen=True)
class SignedMeasure:
    atoms: tuple = ()
    powers: tuple = ()
    tables: tuple = ()

    # construction helpers -------------------------------------------------
    @classmethod
    def zero(cls):
        return cls()

    @classmethod
    def atom(cls, x, w=1.0):
        return cls(atoms=((float(x), float(w)),))

    @classmethod
    def lebesgue(cls, lo=-1.0, hi=1.0, density=1.0):
        return cls(powers=(PowerPiece(float(density), 0.5 * (lo + hi), 0.0, float(lo), float(hi)),))

    @classmethod
    def power(cls, s, coef=1.0, center=0.0, lo=-1.0, hi=1.0):
        return cls(powers=(PowerPiece(float(coef), float(center), float(s), float(lo), float(hi)),))

    @classmethod
    def table(cls, xs, ys):
        xs = tuple(float(v) for v in xs)
        ys = tuple(float(v) for v in ys)
        if len(xs) < 2 or any(b <= a for a, b in zip(xs, xs[1:])):
            raise ValueError("table nodes must be strictly increasing")
        return cls(tables=(TablePiece(xs, ys),))

    def __add__(self, other):
        return SignedMeasure(self.atoms + other.atoms, self.powers + other.powers,
                             self.tables + other.tables)

    def scaled(self, c):
        c = float(c)
        return SignedMeasure(
            tuple((x, c * w) for x, w in self.atoms),
            tuple(PowerPiece(c * p.coef, p.center, p.s, p.lo, p.hi) for p in self.powers),
            tuple(TablePiece(t.xs, tuple(c * y for y in t.ys)) for t in self.tables),
        )

    def shifted(self, c):
        c = float(c)
        return SignedMeasure(
            tuple((x + c, w) for x, w in self.atoms),
            tuple(PowerPiece(p.coef, p.center + c, p.s, p.lo + c, p.hi + c) for p in self.powers),
            tuple(TablePiece(tuple(x + c for x in t.xs), t.ys) for t in self.tables),
        )

    def is_zero(self):
        return (all(w == 0 for _, w in self.atoms) and all(p.coef == 0 for p in self.powers)
                and all(not np.any(t.y) for t in self.tables))

    def check(self):
        for p in self.powers:
            if p.s >= 1.0 and p.coef != 0.0 and p.lo <= p.center <= p.hi:
                raise DivergenceError(f"power piece with s={p.s} >= 1 has infinite mass")
            if not p.hi > p.lo:
                raise ValueError("power piece needs lo < hi")
        return self

    # Jordan decomposition -------------------------------------------------
    def absolute(self):
        return SignedMeasure(
            tuple((x, abs(w)) for x, w in self.atoms),
            tuple(PowerPiece(abs(p.coef), p.center, p.s, p.lo, p.hi) for p in self.powers),
            tuple(t.absolute() for t in self.tables),
        )

    def positive_part(self):
        return SignedMeasure(
            tuple((x, w) for x, w in self.atoms if w > 0),
            tuple(p for p in self.powers if p.coef > 0),
            tuple(t.positive() for t in self.tables),
        )

    def negative_part(self):
        return self.scaled(-1.0).positive_part()

    # masses ---------------------------------------------------------------
    def total_variation(self):
        self.check()
        return self.absolute().total_mass()

    def total_mass(self):
        self.check()
        m = sum(w for _, w in self.atoms)
        m += sum(float(p.mass_between(p.lo, p.hi)) for p in self.powers)
        m += sum(float(t.cdf(t.hi)) for t in self.tables)
        return float(m)

    def mass_between(self, a, b):
        """nu((a, b]) for arrays a <= b, atoms counted in the half-open cell."""
        a = np.asarray(a, dtype=float)
        b = np.asarray(b, dtype=float)
        out = np.zeros(np.broadcast(a, b).shape)
        for x, w in self.atoms:
            out += w * ((x > a) & (x <= b))
        for p in self.powers:
            out += p.mass_between(a, b)
        for t in self.tables:
            out += t.cdf(b) - t.cdf(a)
        return out

    def cell_masses(self, nodes):
        """Masses of cells of width h centred on the uniform `nodes`."""
        nodes = np.asarray(nodes, dtype=float)
        h = nodes[1] - nodes[0]
        return self.mass_between(nodes - 0.5 * h, nodes + 0.5 * h)

    def density(self, x):
        """Absolutely continuous part evaluated at x (atoms excluded)."""
        x = np.asarray(x, dtype=float)
        out = np.zeros_like(x)
        for p in self.powers:
            out = out + p.density(x)
        for t in self.tables:
            out = out + t.density(x)
        return out

    def support(self):
        pts = [x for x, w in self.atoms if w != 0]
        for p in self.powers:
            if p.coef != 0:
                pts += [p.lo, p.hi]
        for t in self.tables:
            pts += [t.lo, t.hi]
        if not pts:
            return (0.0, 0.0)
        return (min(pts), max(pts))

    def singular_points(self):
        pts = [x for x, _ in self.atoms]
        for p in self.powers:
            pts += [p.center, p.lo, p.hi]
        for t in self.tables:
            pts += [t.lo, t.hi]
        return sorted(set(pts))

    def integrate(self, f, order=12):
        """int f dnu with f smooth and vectorized."""
        total = sum(w * float(f(np.array([x]))[0]) for x, w in self.atoms)
        for p in self.powers:
            pts = [p.center] if p.s > 0 else []
            y, wts = power_product_rule(p.lo, p.hi, pts, [-p.s] * len(pts), order=order)
            total += p.coef * float(np.sum(wts * f(y)))
        for t in self.tables:
            xs = t.x
            g, gw = gauss_legendre(0.0, 1.0, order)
            a, b = xs[:-1, None], xs[1:, None]
            y = a + (b - a) * g[None, :]
            total += float(np.sum((b - a) * gw[None, :] * t.density(y) * f(y)))
        return float(total)

    # serialization --------------------------------------------------------
    def to_dict(self):
        return {
            "atoms": [{"x": x, "w": w} for x, w in self.atoms],
            "powers": [{"coef": p.coef, "center": p.center, "s": p.s, "lo": p.lo, "hi": p.hi}
                       for p in self.powers],
            "tables": [{"xs": list(t.xs), "ys": list(t.ys)} for t in self.tables],
        }

    @classmethod
    def from_dict(cls, d):
        atoms = tuple((float(a["x"]), float(a["w"])) for a in d.get("atoms", []))
        powers = tuple(PowerPiece(float(p["coef"]), float(p.get("center", 0.0)), float(p["s"]),
                                  float(p["lo"]), float(p["hi"])) for p in d.get("powers", []))
        tables = tuple(SignedMeasure.table(t["xs"], t["ys"]).tables[0] for t in d.get("tables", []))
        return cls(atoms, powers, tables).check()

    def to_json(self):
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_json(cls, text):
        return cls.from_dict(json.loads(text))


def total_variation(nu):
    return nu.total_variation()


# ---------------------------------------------------------------------------
# Kato modulus


def _local_singular_integral(nu, x, r, expo):
    """int_{|y-x|<=r} |x-y|^{expo} |nu|(dy), computed in coordinates centred at x."""
    total = 0.0
    for a, w in nu.atoms:
        d = abs(x - a)
        if w != 0 and d <= r:
            if d == 0.0 and expo < 0:
                return DIVERGENT
            total += abs(w) * d ** expo
    for p in nu.powers:
        if p.coef == 0:
            continue
        lo, hi = max(p.lo - x, -r), min(p.hi - x, r)
        if not hi > lo:
            continue
        c = p.center - x
        if p.s > 0 and c == 0.0 and expo - p.s <= -1.0:
            return DIVERGENT
        pts = [0.0] + ([c] if p.s > 0 else [])
        exps = [expo] + ([-p.s] if p.s > 0 else [])
        y, wts = power_product_rule(lo, hi, pts, exps)
        total += abs(p.coef) * float(wts.sum())
    for t in nu.tables:
        ta = t.absolute()
        lo, hi = max(ta.lo - x, -r), min(ta.hi - x, r)
        if not hi > lo:
            continue
        knots = tuple(v - x for v in ta.xs)
        y, wts = power_product_rule(lo, hi, [0.0], [expo], breaks=knots, panels=6, order=8)
        total += float(np.sum(wts * ta.density(y + x)))
    return total


def _modulus_divergent(nu, eta):
    expo = eta - 1.0
    if any(w != 0 for _, w in nu.atoms) and expo < 0:
        return True
    for p in nu.powers:
        if p.singular_in_support() and expo - p.s <= -1.0:
            return True
    return False


def _golden_max(f, a, b, iters=40):
    g = (math.sqrt(5.0) - 1.0) / 2.0
    c, d = b - g * (b - a), a + g * (b - a)
    fc, fd = f(c), f(d)
    for _ in range(iters):
        if fc > fd:
            b, d, fd = d, c, fc
            c = b - g * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + g * (b - a)
            fd = f(d)
    return max((fc, c), (fd, d))


def modulus_profile(nu, eta, r, xs):
    """x -> int_{B(x,r)} |x-y|^{eta-1} |nu|(dy) on the given points."""
    return np.array([_local_singular_integral(nu, float(x), r, eta - 1.0) for x in xs])


def kato_modulus(nu, eta, r, n_grid=201, refine=4):
    """sup_x int_{B(x,r)} |x-y|^{eta-1} |nu|(dy); DIVERGENT (= inf) when the sup is infinite."""
    if not r > 0:
        raise ValueError("r must be positive")
    if not eta > 0:
        raise ValueError("eta must be positive")
    nu.check()
    if nu.is_zero():
        return 0.0
    if _modulus_divergent(nu, eta):
        return DIVERGENT
    lo, hi = nu.support()
    cands = set(nu.singular_points())
    for p in nu.singular_points():
        cands.update([p - r, p + r, p - 0.5 * r, p + 0.5 * r])
    grid = np.linspace(lo - r, hi + r, n_grid)
    cands.update(grid.tolist())
    cands = sorted(cands)
    f = lambda x: _local_singular_integral(nu, x, r, eta - 1.0)
    vals = np.array([f(x) for x in cands])
    best = float(vals.max())
    # refine around the best few candidates
    order = np.argsort(vals)[::-1][:refine]
    step = max((hi - lo + 2 * r) / (n_grid - 1), 1e-300)
    for i in order:
        x = cands[i]
        width = min(step, r)
        v, _ = _golden_max(f, x - width, x + width)
        best = max(best, v)
    return best


@dataclass(frozen=True)
class KatoVerdict:
    passed: bool
    divergent: bool
    offending_r: float
    table: tuple = field(default=())

    def __bool__(self):
        return self.passed


def is_kato(nu, eta, r_schedule, tol=1e-2, min_slope=0.02):
    """PASS when M(r) drops below tol along a decreasing r schedule, or when
    it is finite, nonincreasing and decays like r^kappa with a fitted kappa of
    at least min_slope over the second half of the schedule (slow decay near
    the Kato boundary never reaches tol at representable radii)."""
    rs = [float(r) for r in r_schedule]
    if any(b >= a for a, b in zip(rs, rs[1:])):
        raise ValueError("r_schedule must be strictly decreasing")
    table = tuple((r, kato_modulus(nu, eta, r)) for r in rs)
    ms = np.array([m for _, m in table])
    if not np.all(np.isfinite(ms)):
        return KatoVerdict(False, True, rs[int(np.argmax(~np.isfinite(ms)))], table)
    if ms[-1] < tol:
        return KatoVerdict(True, False, math.nan, table)
    half = len(rs) // 2
    if len(rs) >= 4 and np.all(ms > 0) and np.all(np.diff(ms) <= 1e-12 * ms[:-1]):
        kappa = np.polyfit(np.log(rs[half:]), np.log(ms[half:]), 1)[0]
        if kappa >= min_slope:
            return KatoVerdict(True, False, math.nan, table)
    above = [r for r, m in table if m >= tol]
    return KatoVerdict(False, False, above[-1], table)


# ---------------------------------------------------------------------------
# Mollification


@lru_cache(maxsize=1)
def bump_normalizer():
    val, _ = quad(lambda x: math.exp(-1.0 / (1.0 - x * x)), -1.0, 1.0, epsabs=1e-15, epsrel=1e-13)
    return val


def bump(x):
    """Unit-mass exp(-1/(1-x^2)) bump supported on [-1, 1]."""
    x = np.asarray(x, dtype=float)
    inside = np.abs(x) < 1.0
    out = np.zeros_like(x)
    xi = x[inside]
    out[inside] = np.exp(-1.0 / (1.0 - xi * xi)) / bump_normalizer()
    return out


@dataclass(frozen=True)
class MollifiedDensity:
    """x -> int phi_eps(x - y) nu(dy) with eps = 2^{-n}.

    Density pieces are binned to cells of width h and convolved on the grid
    with the discrete kernel normalized to unit sum; atoms are evaluated in
    closed form."""

    n: int
    eps: float
    nodes: np.ndarray
    table: np.ndarray  # density part on nodes
    atoms: tuple

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        out = np.interp(x, self.nodes, self.table, left=0.0, right=0.0)
        for a, w in self.atoms:
            out = out + w * bump((x - a) / self.eps) / self.eps
        return out

    def sup_abs(self):
        vals = np.abs(self(self.nodes))
        extra = [abs(self(np.array([a]))[0]) for a, _ in self.atoms]
        return float(max([vals.max(initial=0.0)] + extra))

    def on_grid(self, x):
        return self(x)

    def total_mass(self):
        h = self.nodes[1] - self.nodes[0]
        return float(self.table.sum() * h + sum(w for _, w in self.atoms))


def mollify(nu, n, cells_per_eps=64):
    nu.check()
    eps = 2.0 ** (-int(n))
    h = eps / cells_per_eps
    lo, hi = nu.support()
    if nu.powers or nu.tables:
        dlo = min([p.lo for p in nu.powers] + [t.lo for t in nu.tables])
        dhi = max([p.hi for p in nu.powers] + [t.hi for t in nu.tables])
    else:
        dlo = dhi = 0.5 * (lo + hi)
    k0 = math.floor((dlo - eps) / h) - 2
    k1 = math.ceil((dhi + eps) / h) + 2
    nodes = h * np.arange(k0, k1 + 1)
    dens_only = SignedMeasure((), nu.powers, nu.tables)
    masses = dens_only.cell_masses(nodes)
    m = cells_per_eps
    kern = bump(np.arange(-m, m + 1) / m)
    kern = kern / kern.sum()
    table = fftconvolve(masses, kern, mode="same") / h
    # fftconvolve leaves ~1e-17 noise where the exact result vanishes
    table[np.abs(table) < 1e-14 * max(np.abs(table).max(), 1e-300)] = 0.0
    return MollifiedDensity(int(n), eps, nodes, table, tuple(nu.atoms))


# ---------------------------------------------------------------------------
# Heat-semigroup proxies


def _gaussian_integrals(nu_abs, x, variances):
    """int exp(-(x-y)^2 / (2 v)) nu_abs(dy) for each variance v (nonnegative measure)."""
    v = np.asarray(variances, dtype=float)
    total = np.zeros_like(v)
    for a, w in nu_abs.atoms:
        total += w * np.exp(-(x - a) ** 2 / (2.0 * v))
    lo_all, hi_all = nu_abs.support()
    span = max(hi_all - lo_all, abs(x - lo_all), abs(x - hi_all), 1.0)
    dists = span * 2.0 ** -np.arange(0, 60)
    breaks = tuple(np.concatenate([-dists, [0.0], dists]))
    ys, ws = [], []
    for p in nu_abs.powers:
        lo, hi = p.lo - x, p.hi - x
        pts = [p.center - x] if p.s > 0 else []
        y, w = power_product_rule(lo, hi, pts, [-p.s] * len(pts), breaks=breaks,
                                  panels=2, ratio=0.5, order=8)
        ys.append(y)
        ws.append(p.coef * w)
    for t in nu_abs.tables:
        knots = tuple(k - x for k in t.xs) if len(t.xs) < 400 else ()
        y, w = power_product_rule(t.lo - x, t.hi - x, breaks=breaks + knots,
                                  panels=2, ratio=0.5, order=8)
        ys.append(y)
        ws.append(w * t.density(y + x))
    if ys:
        y = np.concatenate(ys)
        w = np.concatenate(ws)
        total += np.exp(-(y[None, :] ** 2) / (2.0 * v[:, None])) @ w
    return total


def _x_candidates(nu, n_grid, pad):
    lo, hi = nu.support()
    pts = set(np.linspace(lo - pad, hi + pad, n_grid).tolist())
    pts.update(nu.singular_points())
    return sorted(pts)


def besov_heat_norm(nu, s, t_grid, x_grid=None, n_grid=81):
    """max over t and x of t^{s/2} (2 pi t)^{-1/2} int exp(-(x-y)^2/(4t)) |nu|(dy)."""
    if not s > 0:
        raise ValueError("s must be positive")
    nu_abs = nu.absolute()
    if nu_abs.is_zero():
        return 0.0
    best = 0.0
    for t in t_grid:
        t = float(t)
        xs = x_grid if x_grid is not None else _x_candidates(nu, n_grid, 2 * math.sqrt(t))
        for x in xs:
            g = _gaussian_integrals(nu_abs, float(x), [2 * t])[0]
            best = max(best, t ** (s / 2) * (2 * math.pi * t) ** -0.5 * g)
    return best


def kato_heat_modulus(nu, eta, t, x_grid=None, n_grid=41):
    """sup_x int_0^t tau^{eta/2-1} int h(tau,x,y) |nu|(dy) dtau, h the unit-mass
    Gaussian kernel with variance tau. Returns DIVERGENT for eta at or below
    the singular exponent of an atom or power piece."""
    nu_abs = nu.absolute()
    if nu_abs.is_zero():
        return 0.0
    if any(w != 0 for _, w in nu.atoms) and eta < 1.0:
        return DIVERGENT
    if any(p.singular_in_support() and eta <= p.s for p in nu.powers):
        return DIVERGENT
    taus, wt = singular_rule(0.0, float(t), eta / 2.0 - 1.0, 0.0, panels=16, ratio=0.25, order=10)
    xs = x_grid if x_grid is not None else _x_candidates(nu, n_grid, 0.0)
    best = 0.0
    for x in xs:
        inner = _gaussian_integrals(nu_abs, float(x), taus) / np.sqrt(2 * math.pi * taus)
        best = max(best, float(np.sum(wt * inner)))
    return best
