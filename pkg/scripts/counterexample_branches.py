#!/usr/bin/env python3
"""Integrate the branches of |x|^{4/3} - |y|^{4/3} under H^2 = |p|^2/2 and tabulate V along them.

The unseeded on-axis branch from (1,0) sees V decay, a seeded branch keeps V constant,
and the branch from (0,1) sees V grow, so V is neither monotone nor constant.
"""

import argparse

import numpy as np

from aronsson_lab import candidates as cd
from aronsson_lab import dynamics as dy
from aronsson_lab import sysmodel as sm


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--horizon", type=float, default=1.0)
    ap.add_argument("--csv-prefix", default=None, help="write <prefix>-<branch>.csv for each branch")
    args = ap.parse_args()

    U, e = cd.example_counterexample(), sm.isotropic(2)
    opts = dy.IntegrationOptions(horizon=args.horizon, mode="squared", scale=0.5)
    seed = dy.seed_offsets(U, [1.0, 0.0])[1]
    branches = {
        "axis": dy.integrate(U, e, [1.0, 0.0], opts=opts),
        "seeded": dy.integrate(U, e, [1.0, 0.0], opts=opts, seed_offset=seed),
        "upward": dy.integrate(U, e, [0.0, 1.0], opts=opts),
    }
    k = 2 * np.sqrt(2) / 3
    print(f"{'branch':8s} {'V(0)':>10s} {'V(end)':>10s} {'steps':>6s}  closed form")
    for name, tr in branches.items():
        ref = {"axis": k * np.sqrt(1 - 8 * tr.t / 9), "upward": k * np.sqrt(1 + 8 * tr.t / 9)}.get(name)
        err = "" if ref is None else f"max err {np.max(np.abs(tr.V - ref)):.1e}"
        print(f"{name:8s} {tr.V[0]:10.6f} {tr.V[-1]:10.6f} {len(tr.t):6d}  {err}")
        if args.csv_prefix:
            tr.to_csv(f"{args.csv_prefix}-{name}.csv")


if __name__ == "__main__":
    main()
