"""Deployed-controller cost and Riccati gap as the vertex grid is refined.

Each row synthesizes on a finer knot grid of the spring-damper benchmark and
reports the integrated infinite-horizon cost, the lower bound, the relative
gap, the worst spectral radius and the wall time.

    python3 scripts/vertex_gap_table.py [--N 200]
"""
import argparse
import time

import numpy as np

from prhpg.benchmarks import msd_qlpv
from prhpg.evaluation import evaluate_controller, uniform_grid
from prhpg.quadrature import rule_for_model
from prhpg.stage import CostSpec
from prhpg.sweep import rhpg_synthesize

GRIDS = [(2, 2), (3, 2), (3, 3), (4, 3), (4, 4), (5, 5)]


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--N", type=int, default=200)
    args = ap.parse_args()

    cost = CostSpec(np.eye(2), np.eye(1), np.eye(2))
    # a common fine rule so that rows are comparable
    ref_rule = rule_for_model(msd_qlpv(d=2, knots=GRIDS[-1]), 4)
    print(f"{'grid':>8} {'Nv':>4} {'J_inf':>14} {'J_ric':>14} {'gap %':>9} {'rho_max':>9} {'time s':>8}")
    for knots in GRIDS:
        model = msd_qlpv(d=2, knots=knots)
        rule = rule_for_model(model, 4)
        t0 = time.perf_counter()
        res = rhpg_synthesize(model, cost, args.N, rule)
        elapsed = time.perf_counter() - t0
        rep = evaluate_controller(model, res.gains, cost, ref_rule, uniform_grid(model.domain, [41, 41]))
        gap = f"{100 * rep.gap:9.4f}" if rep.stable else f"{'-':>9}"
        J = f"{rep.J_inf:14.8f}" if rep.stable else f"{'unstable':>14}"
        print(f"{str(knots):>8} {model.nv:>4} {J} {rep.J_ric:14.8f} {gap} {rep.rho_max:9.5f} {elapsed:8.3f}")


if __name__ == "__main__":
    main()
