"""Closed-loop responses with the scheduling parameter frozen at a few points.

    python3 scripts/frozen_simulation.py [--steps 150] [--out out/frozen.csv]
"""
import argparse
import csv
from pathlib import Path

import numpy as np

from prhpg.benchmarks import msd_qlpv
from prhpg.evaluation import simulate_frozen
from prhpg.quadrature import rule_for_model
from prhpg.stage import CostSpec
from prhpg.sweep import rhpg_synthesize


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--steps", type=int, default=150)
    ap.add_argument("--N", type=int, default=200)
    ap.add_argument("--out", default="out/frozen.csv")
    args = ap.parse_args()

    model = msd_qlpv(d=2, knots=3)
    rule = rule_for_model(model, 4)
    cost = CostSpec(np.eye(2), np.eye(1), np.eye(2))
    gains = rhpg_synthesize(model, cost, args.N, rule).gains
    lo, hi = model.domain.lo, model.domain.hi
    points = [lo, hi, 0.5 * (lo + hi), np.array([hi[0], lo[1]])]
    x0 = np.array([1.0, 0.0])

    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    with out.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["k_stiff", "c_damp", "t", "x1", "x2", "u"])
        for p in points:
            traj = simulate_frozen(model, gains, p, x0, args.steps, cost)
            for t in range(args.steps):
                w.writerow([repr(p[0]), repr(p[1]), t, repr(traj.x[t, 0]), repr(traj.x[t, 1]), repr(traj.u[t, 0])])
            print(f"p = ({p[0]:.3f}, {p[1]:.3f}): cost {traj.stage_cost.sum():.6f}, "
                  f"|x_final| = {np.linalg.norm(traj.x[-1]):.2e}")
    print(f"wrote {out}")


if __name__ == "__main__":
    main()
