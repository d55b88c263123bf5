"""Horizon sweep over the standard terminal costs on the spring-damper benchmark.

    python3 scripts/horizon_sweep.py [--d 2] [--knots 3] [--out out/horizon_sweep.csv]
"""
import argparse
import csv
from pathlib import Path

import numpy as np

from prhpg.benchmarks import msd_qlpv
from prhpg.evaluation import uniform_grid
from prhpg.quadrature import rule_for_model
from prhpg.stage import CostSpec
from prhpg.sweep import horizon_sweep, standard_terminal_choices


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--d", type=int, default=2)
    ap.add_argument("--knots", type=int, default=3)
    ap.add_argument("--horizons", type=int, nargs="+", default=[1, 2, 5, 10, 20, 50, 100, 200])
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--out", default="out/horizon_sweep.csv")
    args = ap.parse_args()

    model = msd_qlpv(d=args.d, knots=args.knots)
    rule = rule_for_model(model, 4)
    cost = CostSpec(np.eye(model.n), np.eye(model.m), np.eye(model.n))
    grid = uniform_grid(model.domain, [21] * model.d)
    res = horizon_sweep(model, cost, args.horizons, rule, standard_terminal_choices(args.seed), grid)

    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    with out.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["terminal", "N", "J_N", "rho_max", "stable"])
        for r in res.rows:
            w.writerow([r.terminal, r.N, repr(r.J_N), repr(r.rho_max), r.stable])

    s = res.summary()
    tags = list(s["terminals"])
    print(f"{'N':>5} " + " ".join(f"{t:>22}" for t in tags))
    for N in args.horizons:
        vals = {r.terminal: r.J_N for r in res.rows if r.N == N}
        print(f"{N:>5} " + " ".join(f"{vals[t]:>22.10f}" for t in tags))
    print(f"spread at N={s['largest_N']}: {s['spread_at_largest_N']:.3e}")
    if "J_inf_feasible" in s:
        print(f"feasible J_inf ({s['feasible_source']}): {s['J_inf_feasible']:.10f}")
    print(f"wrote {out}")


if __name__ == "__main__":
    main()
