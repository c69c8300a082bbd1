"""Level distances of the boundary drift against a smooth control, plus the
defining constants at the chosen alpha."""

import argparse

from stablelab.sde_solver import SolverConfig
from stablelab.sharpness import SharpnessParams, nonexistence_fixture, scaling_constant_hat_c


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--alpha", type=float, default=1.5)
    ap.add_argument("--paths", type=int, default=100)
    ap.add_argument("--max-level", type=int, default=8)
    ap.add_argument("--seed", type=int, default=3)
    args = ap.parse_args()

    sp = SharpnessParams.from_alpha(args.alpha)
    hc = scaling_constant_hat_c(sp.alpha, sp.zeta)
    print(f"alpha={sp.alpha} zeta={sp.zeta} I={sp.I:.10f} C={sp.C_alpha:.10f} c_hat={hc.value:.6f} "
          f"(spread {hc.spread:.1e})")
    cfg = SolverConfig(alpha=args.alpha, T=1.0, dt=1e-3, n_paths=args.paths, seed=args.seed, eps_jump=1e-2)
    fx = nonexistence_fixture(cfg, levels=tuple(range(2, args.max_level + 1)))
    print(f"{'n':>3} {'m':>3} {'sharp':>10} {'control':>10}")
    for n, m, ds, dc in fx.rows():
        print(f"{n:3d} {m:3d} {ds:10.3e} {dc:10.3e}")
    print(f"stalled above control floor: {fx.stalled}  ({fx.label})")
    print("E|X_T|^zeta by level:", {k: round(v, 4) for k, v in fx.moment_by_level.items()})


if __name__ == "__main__":
    main()
