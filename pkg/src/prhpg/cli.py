"""Command-line front end.

Every command reads a JSON run config (``--config``) and writes its artifacts
into ``--out`` (default: the config's ``output_dir``, else ``./out``). Exit
codes: 0 ok, 2 config error, 3 numerical error. Errors are reported as one
JSON record on stderr and, when the output directory is known, as
``error.json``.
"""
from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

import numpy as np
from threadpoolctl import threadpool_limits

from .config import RunConfig
from .errors import ConfigError, PRHPGError
from .evaluation import evaluate_controller, uniform_grid
from .model import check_gains, gram_matrix, model_to_dict, save_model, zero_gains
from .stage import (
    CostToGoField,
    asymptotic_ratio,
    build_stage_data,
    node_data,
    propagate_cost_to_go,
    stage_hessian,
    stage_solve_direct,
    stage_solve_gd,
)
from .sweep import GD, find_feasible_gain, horizon_sweep, jointly_stable, make_terminal_cost, rhpg_synthesize

EXIT_OK, EXIT_CONFIG, EXIT_NUMERICAL = 0, 2, 3

SWEEP_HEADER = ["terminal", "N", "J_N", "rho_max", "J_inf", "stable", "monotone_ok"]


def _fmt(x):
    if x is None:
        return ""
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return repr(float(x))


def _write_json(path: Path, obj):
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def _write_csv(path: Path, header, rows):
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([_fmt(v) if not isinstance(v, str) else v for v in r])


def load_gains(path, model=None):
    data = json.loads(Path(path).read_text())
    gains = np.asarray(data["gains"] if isinstance(data, dict) else data, dtype=float)
    return check_gains(model, gains) if model is not None else gains


def gains_to_dict(gains):
    gains = np.asarray(gains)
    nv, m, n = gains.shape
    return {"nv": nv, "m": m, "n": n, "gains": gains.tolist()}


# ---------------------------------------------------------------------------
# commands


def cmd_synthesize(cfg: RunConfig, out: Path):
    model = cfg.model()
    cost = cfg.cost(model)
    rule = cfg.rule(model)
    grid = uniform_grid(model.domain, cfg.eval_counts(model))
    res = rhpg_synthesize(model, cost, cfg.horizon, rule, cfg.solver(), cfg.terminal(),
                          keep_schedule=cfg.raw.get("keep_schedule", False))
    stable, rho = jointly_stable(model, res.gains, rule, grid)
    doc = res.to_dict(timing=cfg.raw.get("record_timing", False))
    doc.update(stable=stable, rho_max=rho, quadrature_nodes=len(rule))
    _write_json(out / "result.json", doc)
    _write_json(out / "gains.json", gains_to_dict(res.gains))
    return doc


def cmd_sweep(cfg: RunConfig, out: Path):
    model = cfg.model()
    cost = cfg.cost(model)
    rule = cfg.rule(model)
    grid = uniform_grid(model.domain, cfg.eval_counts(model))
    feasible = None
    if "gains_path" in cfg.raw:
        feasible = find_feasible_gain(model, cost, rule, grid, gains=load_gains(cfg.base_dir / cfg.raw["gains_path"], model))
    res = horizon_sweep(model, cost, cfg.horizons(), rule, cfg.sweep_terminals(), grid, feasible=feasible,
                        solver=cfg.solver(), feasible_horizon=cfg.raw.get("feasible_horizon", 500))
    rows = [[r.terminal, r.N, r.J_N, r.rho_max, r.J_inf, r.stable, r.monotone_ok] for r in res.rows]
    _write_csv(out / "sweep.csv", SWEEP_HEADER, rows)
    summary = res.summary()
    _write_json(out / "sweep_summary.json", summary)
    return summary


def cmd_eval(cfg: RunConfig, out: Path, gains_path=None):
    model = cfg.model()
    cost = cfg.cost(model)
    rule = cfg.rule(model)
    grid = uniform_grid(model.domain, cfg.eval_counts(model))
    gains_path = gains_path or cfg.raw.get("gains_path")
    if gains_path is None:
        gains, source = zero_gains(model), "zero"
    else:
        path = Path(gains_path)
        path = path if path.is_absolute() else cfg.base_dir / path
        try:
            gains = load_gains(path, model)
        except (OSError, KeyError, ValueError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read gains from {path}: {exc}", "/gains_path") from exc
        source = str(gains_path)
    report = evaluate_controller(model, gains, cost, rule, grid)
    doc = report.to_dict()
    doc["gains_source"] = source
    _write_json(out / "eval_report.json", doc)
    pw = report.pointwise
    d = model.d
    header = [f"p{j + 1}" for j in range(d)] + ["rho", "J_inf_p", "J_ric_p", "gap_p"]
    rows = []
    for k in range(pw["points"].shape[0]):
        vals = list(pw["points"][k]) + [pw["rho"][k], pw["J_inf_p"][k], pw["J_ric_p"][k], pw["gap_p"][k]]
        rows.append([_fmt(v) if np.isfinite(v) else "nan" for v in vals])
    _write_csv(out / "pointwise.csv", header, rows)
    return doc


def cmd_gd_study(cfg: RunConfig, out: Path):
    """Gradient descent on selected stages; other stages use the direct solve."""
    model = cfg.model()
    cost = cfg.cost(model)
    rule = cfg.rule(model)
    N = cfg.horizon
    solver = cfg.solver()
    if not isinstance(solver, GD):
        solver = GD()
    stages = cfg.raw.get("gd_stages", sorted({N - 1, N // 2, 0}, reverse=True))
    bad = [h for h in stages if h >= N]
    if bad:
        raise ConfigError(f"stage indices {bad} outside 0..{N - 1}", "/gd_stages")
    stages = set(stages)
    nodes = node_data(model, rule)
    P = CostToGoField.constant(make_terminal_cost(cfg.terminal(), model, cost), rule)
    rows, per_stage = [], []
    for h in range(N - 1, -1, -1):
        data = build_stage_data(model, cost, P, nodes=nodes)
        H = stage_hessian(data)
        if h in stages:
            K, tel = stage_solve_gd(data, tol=solver.tol, max_iter=solver.max_iter, H=H)
            K_ref = stage_solve_direct(data, H=H)
            g0 = tel.grad_norms[0]
            for k, g in enumerate(tel.grad_norms):
                rows.append([h, k, g, g0 * tel.theoretical_rate ** k, tel.kappa])
            per_stage.append({
                "stage": h, "kappa": tel.kappa, "eta": tel.eta, "iterations": tel.iterations,
                "converged": tel.converged, "final_grad_norm": tel.grad_norms[-1],
                "theoretical_rate": tel.theoretical_rate,
                "observed_rate": asymptotic_ratio(tel.grad_norms) if tel.iterations > 1 else None,
                "rel_diff_direct": float(np.linalg.norm(K - K_ref) / max(np.linalg.norm(K_ref), 1e-300)),
            })
        else:
            K = stage_solve_direct(data, H=H)
        P = CostToGoField(propagate_cost_to_go(K, data), rule)
    _write_csv(out / "gd_study.csv", ["stage", "iteration", "grad_norm", "theory", "kappa"], rows)
    doc = {"horizon": N, "terminal": cfg.terminal().tag, "stages": per_stage}
    _write_json(out / "gd_summary.json", doc)
    return doc


def cmd_gen_benchmark(cfg: RunConfig, out: Path):
    model = cfg.model()
    save_model(model, out / "model.json")
    return model_to_dict(model)


def cmd_gram(cfg: RunConfig, out: Path | None):
    model = cfg.model()
    rule = cfg.rule(model)
    G = gram_matrix(model, rule)
    lam = np.linalg.eigvalsh(G)
    np.set_printoptions(precision=6, linewidth=120)
    print("Gram matrix:")
    print(G)
    print("eigenvalues:", lam)
    doc = {"gram": G.tolist(), "eigenvalues": lam.tolist(), "lambda_min": float(lam[0]),
           "quadrature_nodes": len(rule)}
    if out is not None:
        _write_json(out / "gram.json", doc)
    return doc


COMMANDS = {
    "synthesize": cmd_synthesize,
    "sweep": cmd_sweep,
    "eval": cmd_eval,
    "gd-study": cmd_gd_study,
    "gen-benchmark": cmd_gen_benchmark,
    "gram": cmd_gram,
}


def build_parser():
    ap = argparse.ArgumentParser(prog="prhpg", description="Polytopic receding-horizon policy-gradient synthesis.")
    ap.add_argument("command", choices=sorted(COMMANDS))
    ap.add_argument("--config", required=True, help="JSON run config")
    ap.add_argument("--out", help="output directory (overrides output_dir)")
    ap.add_argument("--threads", type=int, help="max BLAS threads (overrides threads)")
    ap.add_argument("--seed", type=int, help="master seed (overrides seed)")
    ap.add_argument("--gains", help="gains file for eval (overrides gains_path)")
    return ap


def _error(kind, exc, code, out):
    record = {"error": kind, "type": type(exc).__name__, "message": str(exc), "exit_code": code}
    if isinstance(exc, ConfigError):
        record["message"] = exc.msg
        if exc.key:
            record["key"] = exc.key
    print(json.dumps(record, sort_keys=True), file=sys.stderr)
    if out is not None and out.is_dir():
        _write_json(out / "error.json", record)
    return code


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    out = Path(args.out) if args.out is not None else None
    try:
        if out is not None:
            out.mkdir(parents=True, exist_ok=True)
        cfg = RunConfig.load(args.config)
        if args.seed is not None:
            if args.seed < 0:
                raise ConfigError("seed must be non-negative", "--seed")
            cfg.raw["seed"] = args.seed
        if args.threads is not None and args.threads < 1:
            raise ConfigError("threads must be >= 1", "--threads")
        threads = args.threads or cfg.threads
        if out is None:
            if "output_dir" in cfg.raw:
                out = cfg.base_dir / cfg.raw["output_dir"]
            elif args.command != "gram":
                out = Path("out")
            if out is not None:
                out.mkdir(parents=True, exist_ok=True)
        with threadpool_limits(limits=threads):
            if args.command == "eval":
                cmd_eval(cfg, out, args.gains)
            else:
                COMMANDS[args.command](cfg, out)
    except ConfigError as exc:
        return _error("config", exc, EXIT_CONFIG, out)
    except (PRHPGError, np.linalg.LinAlgError, FloatingPointError) as exc:
        return _error("numerical", exc, EXIT_NUMERICAL, out)
    except ValueError as exc:
        # remaining ValueErrors come from user-supplied data (shapes, PSD checks)
        return _error("config", exc, EXIT_CONFIG, out)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
