"""Command-line runner. Every subcommand validates its config before any
computation, writes its tables and a manifest into --out, and exits with
0 (success), 1 (acceptance failure), 2 (config error) or 3 (non-contraction
or quadrature failure)."""

import argparse
import copy
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import output
from .measures import SignedMeasure, is_kato
from .potentials import NonContractionError, parametrix_density, potential_operator_series
from .quadrature import QuadratureError
from .stable_core import ConfigError, DomainError, StableParams
from .zvonkin import MonotonicityError

THREADS_ENV = "STABLELAB_THREADS"

_SMALL_ATOMS = {"atoms": [{"x": -0.5, "w": 0.1}, {"x": 0.5, "w": 0.1}]}
_POWER_FIXTURE = {"powers": [{"coef": 0.5, "center": 0.0, "s": 0.25, "lo": -1.0, "hi": 1.0}]}
_LEBESGUE = {"tables": [{"xs": [-1.0, 1.0], "ys": [1.0, 1.0]}]}

DEFAULTS = {
    "simulate": {"alpha": 1.5, "x0": 0.0, "T": 1.0, "dt": 1e-3, "n_mollify": 4, "eps_jump": 1e-2,
                 "n_paths": 100, "seed": 0, "small_jump_mode": "gaussian-surrogate", "record_every": 10,
                 "measure": _SMALL_ATOMS},
    "localtime": {"alpha": 1.5, "x0": 0.0, "T": 1.0, "dt": 1e-4, "eps_jump": 1e-2, "n_paths": 10,
                  "seed": 0, "small_jump_mode": "gaussian-surrogate", "x_lo": -1.0, "x_hi": 1.0, "n_x": 21,
                  "checkpoints": [0.5, 1.0], "bandwidth": 0.05, "h_min": 0.0, "n_mollify": 6,
                  "measure": {}},
    "potential": {"alpha": 1.5, "lam": 1.0, "K": 40, "x_lo": -3.0, "x_hi": 3.0, "n_x": 121, "h": 0.01,
                  "measure": _SMALL_ATOMS},
    "kernel": {"alpha": 1.5, "K": 4, "t": [0.05, 0.1], "x": [0.0], "y_lo": -4.0, "y_hi": 4.0,
               "h": 0.03125, "measure": _SMALL_ATOMS},
    "zvonkin": {"alpha": 1.5, "lam": 0.0, "h": 0.01, "target": 0.5, "delta": 0.5, "measure": _POWER_FIXTURE},
    "kato-check": {"etas": [0.25, 0.5, 0.75], "r_schedule": [0.5, 0.1, 0.01, 1e-3, 1e-4, 1e-5, 1e-6],
                   "measure": _LEBESGUE},
    "sharpness": {"alpha": 1.5, "zeta": 0.0, "y_samples": [0.5, 1.0, 2.0, 5.0], "fixture": False,
                  "levels": [2, 3, 4, 5, 6], "n_paths": 50, "dt": 1e-3, "seed": 0},
    "acceptance": {"criteria": [1, 2, 3, 4, 5, 6, 7, 8, 9]},
}


# ---------------------------------------------------------------------------
# config


def resolve_config(sub, path=None, seed=None):
    """Defaults overlaid with the file's keys (flat, or under a table named
    after the subcommand). Unknown keys and wrong types are config errors."""
    cfg = copy.deepcopy(DEFAULTS[sub])
    if path is not None:
        try:
            given = output.load_config(path)
        except (OSError, ValueError) as e:
            raise ConfigError(f"cannot read config {path}: {e}") from e
        if sub in given and isinstance(given[sub], dict):
            given = given[sub]
        for k, v in given.items():
            if k not in cfg:
                raise ConfigError(f"unknown key {k!r} for {sub}")
            if isinstance(cfg[k], (int, float)) and not isinstance(cfg[k], bool):
                if isinstance(v, bool) or not isinstance(v, (int, float)):
                    raise ConfigError(f"{k} must be numeric")
                v = type(cfg[k])(v) if isinstance(cfg[k], float) else v
            cfg[k] = v
    if seed is not None:
        if "seed" not in cfg:
            raise ConfigError(f"{sub} takes no seed")
        cfg["seed"] = int(seed)
    return cfg


def _measure(cfg):
    m = cfg.get("measure", {})
    if isinstance(m, str):
        try:
            return SignedMeasure.from_json(Path(m).read_text())
        except OSError as e:
            raise ConfigError(f"cannot read measure file {m}: {e}") from e
    try:
        return SignedMeasure.from_dict(m or {})
    except (KeyError, TypeError, ValueError) as e:
        raise ConfigError(f"bad measure description: {e}") from e


def _alpha(cfg):
    a = cfg["alpha"]
    if not 1.0 < a < 2.0:
        raise ConfigError("alpha must lie in (1, 2)")
    return StableParams.from_alpha(a)


def default_threads():
    raw = os.environ.get(THREADS_ENV, "1")
    try:
        n = int(raw)
    except ValueError as e:
        raise ConfigError(f"{THREADS_ENV} must be an integer, got {raw!r}") from e
    return max(1, n)


# ---------------------------------------------------------------------------
# subcommands: each returns (exit code, output paths, console lines)


def cmd_simulate(cfg, out, fmt, threads):
    from .sde_solver import SolverConfig, simulate_mollified
    mu = _measure(cfg)
    keys = ("x0", "T", "dt", "n_mollify", "eps_jump", "n_paths", "seed", "alpha", "small_jump_mode")
    sc = SolverConfig(**{k: cfg[k] for k in keys})
    step = int(cfg["record_every"])
    if step < 1:
        raise ConfigError("record_every must be at least 1")
    ens = simulate_mollified(sc, mu)
    rows = []
    for i, p in enumerate(ens.paths):
        for k in range(0, p.times.size, step):
            rows.append((i, p.times[k], p.values[k], p.drift_record[k]))
    files = [output.write_table(out, "paths", "paths", ("path_id", "t", "X", "A"), rows, fmt)]
    term = ens.terminal()
    summary = {"dt_used": ens.dt, "drift_sup": ens.meta["drift_sup"], "terminal_mean": float(term.mean()),
               "terminal_median": float(np.median(term)), "n_paths": len(ens.paths)}
    files.append(output.write_json(Path(out) / "summary.json", summary))
    return 0, files, [f"simulated {len(ens.paths)} paths, dt={ens.dt:g}"]


def cmd_localtime(cfg, out, fmt, threads):
    from .local_time import ensemble_field
    from .sde_solver import SolverConfig, simulate_mollified
    params = _alpha(cfg)
    mu = _measure(cfg)
    keys = ("x0", "T", "dt", "n_mollify", "eps_jump", "n_paths", "seed", "alpha", "small_jump_mode")
    sc = SolverConfig(**{k: cfg[k] for k in keys})
    xs = np.linspace(cfg["x_lo"], cfg["x_hi"], int(cfg["n_x"]))
    cps = np.asarray(cfg["checkpoints"], float)
    if np.any(cps <= 0) or np.any(cps > sc.T):
        raise ConfigError("checkpoints must lie in (0, T]")
    ens = simulate_mollified(sc, mu)
    h_min = cfg["h_min"] if cfg["h_min"] > 0 else None
    ef = ensemble_field(ens.paths, xs, cps, params, cfg["bandwidth"], h_min, threads=threads)
    m = ef.mean
    rows = [(t, x, m.gamma[i, j], m.ell[i, j], m.martingale_part[i, j])
            for i, t in enumerate(cps) for j, x in enumerate(xs)]
    files = [output.write_table(out, "localtime", "localtime", ("t", "x", "gamma", "ell", "N"), rows, fmt)]
    diag = {"n_paths": ef.n_paths, "gamma_sd": ef.gamma_sd, "ell_sd": ef.ell_sd, "N_sd": ef.N_sd,
            "noise_floor_N": ef.N_sd / np.sqrt(ef.n_paths), "domain_flags": m.domain_flags,
            "clipped_mass": m.diagnostics["clipped_mass"], "dt_used": ens.dt}
    files.append(output.write_json(Path(out) / "localtime_diagnostics.json", diag))
    return 0, files, [f"local time on {xs.size} nodes, {ef.n_paths} paths"]


def cmd_potential(cfg, out, fmt, threads):
    params = _alpha(cfg)
    mu = _measure(cfg)
    xs = np.linspace(cfg["x_lo"], cfg["x_hi"], int(cfg["n_x"]))
    res = potential_operator_series(params, mu, mu, cfg["lam"], int(cfg["K"]), xs, h=cfg["h"])
    rows = list(zip(xs, res.values, res.derivative))
    files = [output.write_table(out, "potential", "potential", ("x", "value", "derivative"), rows, fmt)]
    files.append(output.write_json(Path(out) / "potential_series.json",
                                   {"K": res.K, "ratio": res.ratio, "term_sups": res.term_sups,
                                    "tail_bound": res.tail_bound}))
    return 0, files, [f"series ratio {res.ratio:.4g} with {res.K} terms"]


def cmd_kernel(cfg, out, fmt, threads):
    params = _alpha(cfg)
    mu = _measure(cfg)
    h = cfg["h"]
    ys = h * np.arange(int(np.floor(cfg["y_lo"] / h)), int(np.ceil(cfg["y_hi"] / h)) + 1)
    grid = parametrix_density(params, mu, cfg["t"], cfg["x"], ys, K=int(cfg["K"]), h=h)
    header = ("t", "x", "y", "value")
    files = [output.write_table(out, "kernel", "kernel_grid", header, output.kernel_grid_rows(grid), fmt)]
    files.append(output.write_json(Path(out) / "kernel_sidecar.json", output.kernel_grid_sidecar(grid)))
    code = 0 if grid.converged else 3
    return code, files, [f"parametrix K={grid.K}, tail ratio {grid.tail_ratio:.3g}"]


def cmd_zvonkin(cfg, out, fmt, threads):
    from .zvonkin import critical_lambda, holder_audit, m_bounds, solve_resolvent
    params = _alpha(cfg)
    mu = _measure(cfg)
    table = []
    lam = cfg["lam"]
    if lam <= 0:
        lam, table = critical_lambda(params, mu, target=cfg["target"], h=cfg["h"])
    zt = solve_resolvent(params, mu, lam, h=cfg["h"])
    files = [output.write_table(out, "zvonkin", "zvonkin", ("x", "w", "w_prime", "phi"), zt.to_rows(), fmt)]
    lo_b, hi_b = m_bounds(zt.eps0, params.alpha)
    lo, hi = mu.support() if not mu.is_zero() else (-1.0, 1.0)
    xg = np.linspace(lo - 1.0, hi + 1.0, 50)
    rg = np.concatenate([-np.geomspace(5.0, 1e-3, 25), np.geomspace(1e-3, 5.0, 25)])
    Z, R = np.meshgrid(zt.phi(xg), rg, indexing="ij")
    m = zt.m(Z, R)
    hr = holder_audit(zt, cfg["delta"], np.linspace(lo, hi, 9), (-2.0, -0.5, 0.5, 2.0),
                      np.geomspace(1e-3, 0.3, 10))
    audit = {"lambda": lam, "lambda_table": table, "eps0": zt.eps0, "series_ratio": zt.ratio,
             "lipschitz_bounds": zt.lipschitz_bounds(), "m_bounds": [lo_b, hi_b],
             "m_range": [float(m.min()), float(m.max())],
             "m_within_bounds": bool(lo_b <= m.min() and m.max() <= hi_b),
             "holder": {"delta": hr.delta, "exponent": hr.exponent, "stderr": hr.stderr,
                        "intercept": hr.intercept, "passed": hr.passed}}
    files.append(output.write_json(Path(out) / "zvonkin_audit.json", audit))
    return 0, files, [f"lambda={lam:g} eps0={zt.eps0:.4f}"]


def cmd_kato_check(cfg, out, fmt, threads):
    mu = _measure(cfg)
    rs = [float(r) for r in cfg["r_schedule"]]
    rows, verdicts, lines = [], {}, []
    for eta in cfg["etas"]:
        if not 0.0 < eta <= 1.0:
            raise ConfigError("eta must lie in (0, 1]")
        v = is_kato(mu, eta, rs)
        verdicts[str(eta)] = {"passed": v.passed, "divergent": v.divergent, "offending_r": v.offending_r}
        for r, mval in v.table:
            rows.append((eta, r, mval))
        lines.append(f"eta={eta:g}: {'PASS' if v.passed else 'FAIL'}")
    files = [output.write_table(out, "kato", "kato_modulus", ("eta", "r", "modulus"), rows, fmt)]
    files.append(output.write_json(Path(out) / "kato_verdicts.json", verdicts))
    return 0, files, lines


def cmd_sharpness(cfg, out, fmt, threads):
    from .sharpness import SharpnessParams, nonexistence_fixture, scaling_constant_hat_c
    from .sde_solver import SolverConfig
    zeta = cfg["zeta"] if cfg["zeta"] > 0 else None
    try:
        sp = SharpnessParams.from_alpha(cfg["alpha"], zeta)
    except DomainError as e:
        raise ConfigError(str(e)) from e
    hc = scaling_constant_hat_c(sp.alpha, sp.zeta, cfg["y_samples"])
    lines = [f"alpha={sp.alpha:g} zeta={sp.zeta:g} I={sp.I:.12g} C_alpha={sp.C_alpha:.12g}",
             "y, c_hat(y):"] + [f"  {y:g}, {c:.12g}" for y, c in hc.per_sample.items()]
    files = [output.write_table(out, "hat_c", "hat_c", ("y", "c_hat"), list(hc.per_sample.items()), fmt)]
    summary = {"alpha": sp.alpha, "zeta": sp.zeta, "I": sp.I, "C_alpha": sp.C_alpha, "c_tilde": sp.c_tilde,
               "hat_c": hc.value, "hat_c_spread": hc.spread}
    if cfg["fixture"]:
        sc = SolverConfig(x0=0.0, T=1.0, dt=cfg["dt"], n_paths=int(cfg["n_paths"]), seed=int(cfg["seed"]),
                          alpha=sp.alpha)
        fx = nonexistence_fixture(sc, levels=tuple(cfg["levels"]), zeta=sp.zeta)
        files.append(output.write_table(out, "fixture", "nonexistence_fixture",
                                        ("n", "m", "sharp_distance", "control_distance"), fx.rows(), fmt))
        summary["fixture"] = {"label": fx.label, "stalled": fx.stalled, "control_floor": fx.control_floor,
                              "moment_by_level": fx.moment_by_level, "dt": fx.dt, **fx.meta}
        lines.append(f"{fx.label}: stalled={fx.stalled}")
    files.append(output.write_json(Path(out) / "sharpness.json", summary))
    return 0, files, lines


def cmd_acceptance(cfg, out, fmt, threads):
    from .acceptance import run_all
    lines = []
    results = run_all(set(int(n) for n in cfg["criteria"]), echo=lambda s: (print(s, flush=True), lines.append(s)))
    rows = [(r.number, r.name, int(r.passed), round(r.runtime, 1)) for r in results]
    files = [output.write_table(out, "acceptance", "acceptance", ("criterion", "name", "passed", "runtime_s"),
                                rows, fmt),
             output.write_json(Path(out) / "acceptance_details.json",
                               {str(r.number): {"passed": r.passed, "details": r.details, "note": r.note}
                                for r in results})]
    return (0 if all(r.passed for r in results) else 1), files, []


COMMANDS = {"simulate": cmd_simulate, "localtime": cmd_localtime, "potential": cmd_potential,
            "kernel": cmd_kernel, "zvonkin": cmd_zvonkin, "kato-check": cmd_kato_check,
            "sharpness": cmd_sharpness, "acceptance": cmd_acceptance}


def build_parser():
    ap = argparse.ArgumentParser(prog="stablelab", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", type=Path, help="TOML or JSON config, or a previous run's manifest")
        p.add_argument("--seed", type=int)
        p.add_argument("--out", type=Path, default=Path("out") / name)
        p.add_argument("--threads", type=int, help=f"worker threads (default ${THREADS_ENV} or 1)")
        p.add_argument("--format", choices=("csv", "json"), default="csv")
    return ap


def run(argv=None):
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as e:
        return 2 if e.code else 0
    t0 = time.perf_counter()
    try:
        cfg = resolve_config(args.command, args.config, args.seed)
        threads = args.threads if args.threads is not None else default_threads()
        if threads < 1:
            raise ConfigError("--threads must be at least 1")
        args.out.mkdir(parents=True, exist_ok=True)
        code, files, lines = COMMANDS[args.command](cfg, args.out, args.format, threads)
    except (ConfigError, DomainError) as e:
        print(f"config error: {e}", file=sys.stderr)
        return 2
    except (NonContractionError, QuadratureError, MonotonicityError) as e:
        print(f"numerical failure: {e}", file=sys.stderr)
        return 3
    for ln in lines:
        print(ln)
    output.write_manifest(args.out, args.command, cfg, files, time.perf_counter() - t0)
    return code


def main():
    sys.exit(run())
