"""Quadrature building blocks: graded Gauss rules, singular endpoint rules,
lobe-wise oscillatory integrals with Wynn acceleration."""

from functools import lru_cache

import numpy as np
from scipy.special import roots_jacobi, roots_legendre


class QuadratureError(RuntimeError):
    pass


@lru_cache(maxsize=64)
def _legendre(order):
    x, w = roots_legendre(order)
    return x, w


@lru_cache(maxsize=256)
def _jacobi(order, a, b):
    # weight (1 - x)^a (1 + x)^b on [-1, 1]
    x, w = roots_jacobi(order, a, b)
    return x, w


def gauss_legendre(lo, hi, order=16):
    x, w = _legendre(order)
    half = 0.5 * (hi - lo)
    return lo + half * (x + 1.0), half * w


def gauss_jacobi(lo, hi, e_lo, e_hi, order=16):
    """Nodes/weights for int_lo^hi (y-lo)^e_lo (hi-y)^e_hi f(y) dy."""
    x, w = _jacobi(order, float(e_hi), float(e_lo))
    half = 0.5 * (hi - lo)
    scale = half ** (1.0 + e_lo + e_hi)
    return lo + half * (x + 1.0), scale * w


def _graded_side(a, length, e, direction, panels, ratio, order):
    """Geometric panels accumulating at the point a, extending a distance
    `length` in `direction` (+1 or -1). Weights include |y-a|^e."""
    nodes, weights = [], []
    edges = length * ratio ** np.arange(panels + 1)
    # innermost panel carries the singular weight exactly
    inner = edges[-1]
    y, w = gauss_jacobi(0.0, inner, e, 0.0, order)
    nodes.append(a + direction * y)
    weights.append(w)
    for k in range(panels):
        lo, hi = edges[k + 1], edges[k]
        y, w = gauss_legendre(lo, hi, order)
        nodes.append(a + direction * y)
        weights.append(w * y ** e)
    return np.concatenate(nodes), np.concatenate(weights)


def singular_rule(lo, hi, e_lo=0.0, e_hi=0.0, panels=20, ratio=0.3, order=16):
    """Rule for int_lo^hi (y-lo)^e_lo (hi-y)^e_hi f(y) dy with f smooth
    or mildly singular at the endpoints. Both ends are graded."""
    if not hi > lo:
        return np.empty(0), np.empty(0)
    mid = 0.5 * (lo + hi)
    half = mid - lo
    y1, w1 = _graded_side(lo, half, e_lo, +1.0, panels, ratio, order)
    y2, w2 = _graded_side(hi, half, e_hi, -1.0, panels, ratio, order)
    # cross factors: (hi - y)^e_hi on the left half, (y - lo)^e_lo on the right
    w1 = w1 * (hi - y1) ** e_hi
    w2 = w2 * (y2 - lo) ** e_lo
    return np.concatenate([y1, y2]), np.concatenate([w1, w2])


def power_product_rule(lo, hi, points=(), exponents=(), breaks=(), **kw):
    """Rule for int_lo^hi prod_i |y - p_i|^{e_i} f(y) dy.

    The returned weights already contain the power factors, so the caller
    only evaluates f. Points inside (lo, hi) split the interval; extra
    `breaks` split it without a singular weight (for near-singular smooth
    factors such as narrow Gaussians)."""
    points = np.asarray(points, dtype=float)
    exponents = np.asarray(exponents, dtype=float)
    cuts = [lo, hi]
    cuts += [p for p in points if lo < p < hi]
    cuts += [b for b in breaks if lo < b < hi]
    cuts = np.unique(np.asarray(cuts, dtype=float))
    all_y, all_w = [], []
    for a, b in zip(cuts[:-1], cuts[1:]):
        if not b > a:
            continue
        at_a = np.isclose(points, a, rtol=0.0, atol=0.0) if points.size else np.zeros(0, bool)
        at_b = np.isclose(points, b, rtol=0.0, atol=0.0) if points.size else np.zeros(0, bool)
        ea = float(exponents[at_a].sum()) if points.size else 0.0
        eb = float(exponents[at_b].sum()) if points.size else 0.0
        y, w = singular_rule(a, b, ea, eb, **kw)
        other = ~(at_a | at_b)
        for p, e in zip(points[other], exponents[other]):
            w = w * np.abs(y - p) ** e
        all_y.append(y)
        all_w.append(w)
    if not all_y:
        return np.empty(0), np.empty(0)
    return np.concatenate(all_y), np.concatenate(all_w)


def wynn_epsilon(partial_sums):
    """Wynn's epsilon algorithm; returns the accelerated limit and a crude
    error estimate (difference of the last two diagonal estimates)."""
    s = np.asarray(partial_sums, dtype=float)
    n = s.size
    if n < 3:
        return float(s[-1]), float("inf")
    prev = np.zeros(n + 1)
    cur = s.copy()
    estimates = [s[-1]]
    k = 0
    while cur.size > 1:
        diff = cur[1:] - cur[:-1]
        if np.any(diff == 0.0):
            break
        with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
            nxt = prev[1 : cur.size] + 1.0 / diff
        if not np.all(np.isfinite(nxt)):
            break
        prev, cur = cur, nxt
        k += 1
        if k % 2 == 0:
            estimates.append(cur[-1])
    if len(estimates) < 2:
        return float(estimates[-1]), float("inf")
    est = np.asarray(estimates)
    errs = np.abs(np.diff(est))
    i = int(np.argmin(errs))
    return float(est[i + 1]), float(errs[i])


def fourier_half_line(f, x, kind="cos", scale=1.0, direct_lobes=None, accel_lobes=40,
                      order=24, head_panels=40):
    """int_0^inf f(xi) trig(xi x) dxi for x != 0, f decaying (possibly slowly).

    The half-line is split at zeros of the trigonometric factor (lobes of
    width pi/|x|). The first segment uses a rule graded towards xi=0; a block
    of lobes is integrated directly and the remaining alternating lobe sums
    are extrapolated by Wynn's epsilon algorithm. `scale` is the xi-scale on
    which f varies near the origin."""
    x = float(x)
    if x == 0.0:
        raise QuadratureError("fourier_half_line needs x != 0")
    ax = abs(x)
    sgn = 1.0 if (kind == "cos" or x > 0) else -1.0
    trig = np.cos if kind == "cos" else np.sin
    first = (0.5 if kind == "cos" else 1.0) * np.pi / ax
    # head: [0, first] graded towards 0
    y, w = _graded_side(0.0, first, 0.0, +1.0, head_panels, 0.5, 16)
    head = float(np.sum(w * f(y) * trig(y * ax)))
    width = np.pi / ax
    if direct_lobes is None:
        # lobes until f is in its smooth tail regime
        direct_lobes = int(min(max(20, np.ceil(20.0 * scale / width)), 20000))
    n_total = direct_lobes + accel_lobes
    g, gw = _legendre(order)
    starts = first + width * np.arange(n_total)
    nodes = starts[:, None] + 0.5 * width * (g[None, :] + 1.0)
    vals = f(nodes) * trig(nodes * ax)
    lobes = (vals * (0.5 * width * gw)[None, :]).sum(axis=1)
    partial = head + np.cumsum(lobes)
    limit, err = wynn_epsilon(partial[direct_lobes - 1 :])
    scale_ref = max(abs(limit), np.abs(lobes).max() * 1e-3, 1e-300)
    if not np.isfinite(limit) or err > 1e-6 * scale_ref + 1e-14:
        raise QuadratureError(f"oscillatory quadrature did not settle (err={err:.3e})")
    return sgn * limit
