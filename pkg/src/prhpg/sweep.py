"""Backward receding-horizon sweep, terminal costs, and horizon studies."""
from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateStageError, UnstableError
from .evaluation import (
    integrated_inf_cost,
    lyapunov_condition_check,
    max_spectral_radius,
    spectral_radius,
    closed_loop_at,
    is_stable,
    vertex_riccati_gains,
)
from .model import PolytopicModel, gram_matrix
from .quadrature import QuadratureRule
from .stage import (
    CostSpec,
    CostToGoField,
    NodeData,
    build_stage_data,
    node_data,
    propagate_cost_to_go,
    stage_gradient,
    stage_hessian,
    stage_solve_direct,
    stage_solve_gd,
)

REL_TOL = 1e-9


# ---------------------------------------------------------------------------
# terminal costs and solvers


@dataclass(frozen=True)
class TerminalCost:
    kind: str  # zero | running_q | scaled_identity | are_average | wishart | explicit
    gamma: float | None = None
    seed: int | None = None
    matrix: tuple | None = None

    KINDS = ("zero", "running_q", "scaled_identity", "are_average", "wishart", "explicit")

    def __post_init__(self):
        if self.kind not in self.KINDS:
            raise ValueError(f"unknown terminal cost kind {self.kind!r}")
        if self.kind == "scaled_identity" and self.gamma is None:
            raise ValueError("scaled_identity needs gamma")
        if self.kind == "wishart" and self.seed is None:
            raise ValueError("wishart needs a seed")
        if self.kind == "explicit" and self.matrix is None:
            raise ValueError("explicit terminal cost needs a matrix")

    @classmethod
    def zero(cls):
        return cls("zero")

    @classmethod
    def running_q(cls):
        return cls("running_q")

    @classmethod
    def scaled_identity(cls, gamma):
        return cls("scaled_identity", gamma=float(gamma))

    @classmethod
    def are_average(cls):
        return cls("are_average")

    @classmethod
    def wishart(cls, seed):
        return cls("wishart", seed=int(seed))

    @classmethod
    def explicit(cls, matrix):
        return cls("explicit", matrix=tuple(map(tuple, np.asarray(matrix, dtype=float))))

    @property
    def tag(self) -> str:
        if self.kind == "scaled_identity":
            return f"scaled_identity({self.gamma:g})"
        if self.kind == "wishart":
            return f"wishart(seed={self.seed})"
        return self.kind


def standard_terminal_choices(seed=0):
    """The six terminal costs of the horizon study."""
    return [
        TerminalCost.zero(),
        TerminalCost.are_average(),
        TerminalCost.running_q(),
        TerminalCost.scaled_identity(1000.0),
        TerminalCost.scaled_identity(0.01),
        TerminalCost.wishart(seed),
    ]


def make_terminal_cost(choice: TerminalCost, model: PolytopicModel, cost: CostSpec) -> np.ndarray:
    n = model.n
    if choice.kind == "zero":
        QN = np.zeros((n, n))
    elif choice.kind == "running_q":
        QN = np.array(cost.Q)
    elif choice.kind == "scaled_identity":
        QN = choice.gamma * np.eye(n)
    elif choice.kind == "are_average":
        P, _ = vertex_riccati_gains(model, cost)
        QN = P.mean(axis=0)
    elif choice.kind == "wishart":
        G = np.random.default_rng(choice.seed).standard_normal((n, n))
        QN = G @ G.T
    else:
        QN = np.array(choice.matrix, dtype=float)
        if QN.shape != (n, n):
            raise ValueError(f"explicit terminal cost must be {n} x {n}")
        if np.linalg.eigvalsh(0.5 * (QN + QN.T))[0] < -1e-12:
            raise ValueError("explicit terminal cost must be PSD")
    return 0.5 * (QN + QN.T)


@dataclass(frozen=True)
class Direct:
    pass


@dataclass(frozen=True)
class GD:
    tol: float = 1e-10
    max_iter: int = 100_000


# ---------------------------------------------------------------------------
# synthesis


@dataclass
class StageInfo:
    stage: int
    iterations: int
    kappa: float
    grad_norm: float
    converged: bool = True
    grad_norms: list | None = None


@dataclass
class SynthesisResult:
    gains: np.ndarray  # deployed first-stage gains (Nv, m, n)
    J: float
    horizon: int
    terminal: str
    stages: list  # StageInfo, ordered h = N-1 .. 0
    P0: CostToGoField
    schedule: np.ndarray | None = None  # (N, Nv, m, n), index h
    timing: float = 0.0

    def to_dict(self, timing=False, telemetry=True):
        out = {
            "horizon": self.horizon,
            "terminal": self.terminal,
            "J_N": self.J,
            "nv": int(self.gains.shape[0]),
            "m": int(self.gains.shape[1]),
            "n": int(self.gains.shape[2]),
            "gains": [K.tolist() for K in self.gains],
        }
        if telemetry:
            out["stages"] = [
                {"stage": s.stage, "iterations": s.iterations, "kappa": s.kappa,
                 "grad_norm": s.grad_norm, "converged": s.converged}
                for s in self.stages
            ]
        if self.schedule is not None:
            out["schedule"] = self.schedule.tolist()
        if timing:
            out["timing_s"] = self.timing
        return out


def bellman_step(model, cost: CostSpec, P: CostToGoField, rule=None, solver=Direct(),
                 nodes: NodeData | None = None, stage=None, keep_norms=False):
    """One stage solve plus propagation: returns ``(gains, new field, StageInfo)``."""
    rule = P.rule if rule is None else rule
    nodes = node_data(model, rule) if nodes is None else nodes
    data = build_stage_data(model, cost, P, nodes=nodes)
    try:
        H = stage_hessian(data)
    except DegenerateStageError as exc:
        raise DegenerateStageError(str(exc), stage=stage) from exc
    lam = np.linalg.eigvalsh(H)
    if isinstance(solver, GD):
        K, tel = stage_solve_gd(data, tol=solver.tol, max_iter=solver.max_iter, H=H)
        info = StageInfo(stage, tel.iterations, tel.kappa, tel.grad_norms[-1], tel.converged,
                         tel.grad_norms if keep_norms else None)
    else:
        K = stage_solve_direct(data, H=H)
        info = StageInfo(stage, 0, float(lam[-1] / lam[0]), float(np.linalg.norm(stage_gradient(K, data))))
    return K, CostToGoField(propagate_cost_to_go(K, data), rule), info


def rhpg_synthesize(model: PolytopicModel, cost: CostSpec, N: int, rule: QuadratureRule, solver=Direct(),
                    terminal: TerminalCost | None = None, keep_schedule=False, keep_norms=False,
                    callback=None) -> SynthesisResult:
    """Backward sweep ``h = N-1, ..., 0``; the stage-0 gains are deployed.

    ``terminal=None`` uses ``cost.QN``. ``callback(h, gains, field)`` is called
    after every stage.
    """
    if N < 1:
        raise ValueError("horizon must be >= 1")
    t0 = time.perf_counter()
    QN = cost.QN if terminal is None else make_terminal_cost(terminal, model, cost)
    tag = "explicit" if terminal is None else terminal.tag
    nodes = node_data(model, rule)
    P = CostToGoField.constant(QN, rule)
    schedule = np.zeros((N, model.nv, model.m, model.n)) if keep_schedule else None
    stages = []
    K = None
    for h in range(N - 1, -1, -1):
        K, P, info = bellman_step(model, cost, P, rule, solver, nodes=nodes, stage=h, keep_norms=keep_norms)
        stages.append(info)
        if keep_schedule:
            schedule[h] = K
        if callback is not None:
            callback(h, K, P)
    return SynthesisResult(K, P.integral(cost.Sigma0), N, tag, stages, P, schedule, time.perf_counter() - t0)


# ---------------------------------------------------------------------------
# horizon study


def coercivity_constant(model, cost: CostSpec, rule) -> float:
    """``sigma_min(R) * sigma_min(Sigma0) * lambda_min(Gamma)``."""
    lam_gram = np.linalg.eigvalsh(gram_matrix(model, rule))[0]
    return float(np.linalg.svd(cost.R, compute_uv=False)[-1] * np.linalg.svd(cost.Sigma0, compute_uv=False)[-1] * lam_gram)


def gain_norm_bound(J_feas, cost: CostSpec, c) -> float:
    """Bound on ``sum_i ||K_i||_F^2`` for any deployed gain with ``J_N* <= J_feas``.

    Uses ``Phi_0(K) >= tr(Q Sigma0) + c sum_i ||K_i||_F^2``.
    """
    return float((J_feas - np.trace(cost.Q @ cost.Sigma0)) / c)


def jointly_stable(model, gains, rule, grid) -> tuple[bool, float]:
    rho, _ = max_spectral_radius(model, gains, grid)
    rho_nodes = float(np.max(spectral_radius(closed_loop_at(model, gains, rule.nodes)[0])))
    rho = max(rho, rho_nodes)
    return is_stable(rho), rho


@dataclass
class FeasibleGain:
    gains: np.ndarray
    J_inf: float
    rho_max: float
    source: str


def find_feasible_gain(model, cost, rule, grid, horizon=500, gains=None) -> FeasibleGain:
    """Jointly stabilizing gain for the boundedness checks.

    A supplied ``gains`` wins; otherwise the deployed gain of a long
    zero-terminal run, then the vertex Riccati gains, are tried in order.
    """
    candidates = []
    if gains is not None:
        candidates.append(("user", np.asarray(gains, dtype=float)))
    else:
        res = rhpg_synthesize(model, cost, horizon, rule, terminal=TerminalCost.zero())
        candidates.append((f"zero-terminal N={horizon}", res.gains))
        candidates.append(("vertex-riccati", vertex_riccati_gains(model, cost)[1]))
    for source, K in candidates:
        ok, rho = jointly_stable(model, K, rule, grid)
        if ok:
            return FeasibleGain(K, integrated_inf_cost(model, K, rule, cost), rho, source)
    raise UnstableError("no jointly stabilizing feasible gain found")


@dataclass
class SweepRow:
    terminal: str
    N: int
    J_N: float
    rho_max: float
    J_inf: float | None
    stable: bool
    monotone_ok: bool | None  # None when no monotonicity is predicted
    gain_norm_sq: float = 0.0
    gains: np.ndarray | None = field(default=None, repr=False)


@dataclass
class SweepResult:
    rows: list
    feasible: FeasibleGain | None
    coercivity: float
    gain_bound: float | None
    lyapunov_ok: dict  # terminal tag -> bool

    def summary(self) -> dict:
        out = {"terminals": {}}
        tags = list(dict.fromkeys(r.terminal for r in self.rows))
        for tag in tags:
            rows = [r for r in self.rows if r.terminal == tag]
            expect = "non_decreasing" if tag == "zero" else ("non_increasing" if self.lyapunov_ok.get(tag) else None)
            out["terminals"][tag] = {
                "expected": expect,
                "violations": sum(1 for r in rows if r.monotone_ok is False),
                "final_J": rows[-1].J_N,
                "lyapunov_condition": self.lyapunov_ok.get(tag),
            }
        last = max(r.N for r in self.rows)
        finals = [r.J_N for r in self.rows if r.N == last]
        out["largest_N"] = last
        out["spread_at_largest_N"] = (max(finals) - min(finals)) / min(finals)
        out["coercivity_constant"] = self.coercivity
        out["gain_norm_bound"] = self.gain_bound
        out["max_gain_norm_sq"] = max(r.gain_norm_sq for r in self.rows)
        if self.feasible is not None:
            out["J_inf_feasible"] = self.feasible.J_inf
            out["feasible_source"] = self.feasible.source
            zero = [r.J_N for r in self.rows if r.terminal == "zero"]
            out["bounded_by_feasible"] = all(j <= self.feasible.J_inf * (1 + REL_TOL) for j in zero) if zero else None
        return out


def horizon_sweep(model, cost: CostSpec, horizons, rule, terminals, grid, feasible: FeasibleGain | None = None,
                  solver=Direct(), keep_gains=False, feasible_horizon=500) -> SweepResult:
    """Synthesize and evaluate every ``(terminal, N)`` cell.

    Each terminal is run once to the largest horizon: after ``N`` Bellman
    applications the field is exactly the stage-0 field of a horizon-``N``
    run, so intermediate horizons are read off along the way.
    """
    horizons = [int(h) for h in horizons]
    if horizons != sorted(horizons) or horizons[0] < 1:
        raise ValueError("horizons must be sorted ascending and >= 1")
    if feasible is None:
        try:
            feasible = find_feasible_gain(model, cost, rule, grid, horizon=max(feasible_horizon, horizons[-1]))
        except UnstableError:
            feasible = None
    c = coercivity_constant(model, cost, rule)
    bound = gain_norm_bound(feasible.J_inf, cost, c) if feasible is not None else None
    check_pts = np.vstack([np.atleast_2d(grid), rule.nodes])
    lyap_gains = vertex_riccati_gains(model, cost)[1]
    nodes = node_data(model, rule)
    wanted = set(horizons)

    rows, lyap_ok = [], {}
    for choice in terminals:
        QN = make_terminal_cost(choice, model, cost)
        if choice.kind == "zero":
            expect = "up"
        else:
            ok = lyapunov_condition_check(QN, model, lyap_gains, check_pts, cost).passed
            if not ok and feasible is not None:
                ok = lyapunov_condition_check(QN, model, feasible.gains, check_pts, cost).passed
            lyap_ok[choice.tag] = ok
            expect = "down" if ok else None
        P = CostToGoField.constant(QN, rule)
        prev = None
        for N in range(1, horizons[-1] + 1):
            K, P, _ = bellman_step(model, cost, P, rule, solver, nodes=nodes, stage=N)
            if N not in wanted:
                continue
            J = P.integral(cost.Sigma0)
            stable, rho = jointly_stable(model, K, rule, grid)
            J_inf = integrated_inf_cost(model, K, rule, cost) if stable else None
            mono = None
            if expect == "up":
                mono = prev is None or J >= prev * (1 - REL_TOL)
            elif expect == "down":
                mono = prev is None or J <= prev * (1 + REL_TOL)
            rows.append(SweepRow(choice.tag, N, J, rho, J_inf, stable, mono,
                                 float(np.sum(K ** 2)), K.copy() if keep_gains else None))
            prev = J
    return SweepResult(rows, feasible, c, bound, lyap_ok)
