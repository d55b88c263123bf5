"""Gradient-norm decay of the stage solver against the (1 - 1/kappa)^k envelope.

    python3 scripts/gd_study.py [--N 30] [--terminal are_average]
"""
import argparse

import numpy as np

from prhpg.benchmarks import msd_qlpv
from prhpg.quadrature import rule_for_model
from prhpg.stage import (
    CostToGoField,
    CostSpec,
    asymptotic_ratio,
    build_stage_data,
    node_data,
    propagate_cost_to_go,
    stage_hessian,
    stage_solve_direct,
    stage_solve_gd,
)
from prhpg.sweep import TerminalCost, make_terminal_cost


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--N", type=int, default=30)
    ap.add_argument("--terminal", default="are_average", choices=["zero", "running_q", "are_average"])
    ap.add_argument("--tol", type=float, default=1e-12)
    args = ap.parse_args()

    model = msd_qlpv(d=2, knots=3)
    rule = rule_for_model(model, 4)
    cost = CostSpec(np.eye(2), np.eye(1), np.eye(2))
    nodes = node_data(model, rule)
    P = CostToGoField.constant(make_terminal_cost(TerminalCost(args.terminal), model, cost), rule)

    print(f"{'stage':>5} {'kappa':>10} {'iters':>6} {'1-1/kappa':>12} {'observed':>12} {'rel diff':>10}")
    for h in range(args.N - 1, -1, -1):
        data = build_stage_data(model, cost, P, nodes=nodes)
        H = stage_hessian(data)
        K, tel = stage_solve_gd(data, tol=args.tol, H=H)
        K_ref = stage_solve_direct(data, H=H)
        if h in (args.N - 1, args.N // 2, 0) or h % 10 == 0:
            diff = np.linalg.norm(K - K_ref) / np.linalg.norm(K_ref)
            print(f"{h:>5} {tel.kappa:>10.4f} {tel.iterations:>6} {tel.theoretical_rate:>12.8f} "
                  f"{asymptotic_ratio(tel.grad_norms):>12.8f} {diff:>10.2e}")
        P = CostToGoField(propagate_cost_to_go(K_ref, data), rule)


if __name__ == "__main__":
    main()
