"""Compare the Tanaka local time with the kernel occupation density on a
pure stable ensemble and print both profiles at t = T."""

import argparse

import numpy as np

from stablelab.local_time import ensemble_field
from stablelab.stable_core import StableParams, simulate_levy_path


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--paths", type=int, default=40)
    ap.add_argument("--steps", type=int, default=50_000)
    ap.add_argument("--eps", type=float, default=1e-3)
    ap.add_argument("--bandwidth", type=float, default=0.05)
    ap.add_argument("--seed", type=int, default=7)
    args = ap.parse_args()

    p = StableParams.from_alpha(1.5)
    dt = 1.0 / args.steps
    paths = [simulate_levy_path(p, 1.0, dt, args.eps, seed=args.seed, path_index=i) for i in range(args.paths)]
    xs = np.linspace(-1.0, 1.0, 21)
    ef = ensemble_field(paths, xs, [1.0], p, args.bandwidth, h_min=args.eps)
    g, l = ef.mean.gamma[0], ef.mean.ell[0]
    print(f"{'x':>6} {'gamma':>9} {'ell':>9} {'rel':>7}")
    for x, a, b in zip(xs, g, l):
        print(f"{x:6.2f} {a:9.4f} {b:9.4f} {abs(a - b) / b:7.3f}")
    print(f"mean abs relative error {np.mean(np.abs(g - l) / l):.4f}")


if __name__ == "__main__":
    main()
