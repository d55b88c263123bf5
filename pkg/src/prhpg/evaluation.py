"""Infinite-horizon evaluation of PDC controllers and theory checks.

Per-point solvers (``dlyap``, ``dare``) accept stacks of matrices along a
leading axis and iterate all of them together.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .errors import UnstabilizableError, UnstableError
from .model import PolytopicModel, blend_gains, check_gains, evaluate_system, evaluate_weights
from .quadrature import QuadratureRule
from .stage import CostSpec, build_stage_data, node_data, stage_gradient

STABILITY_MARGIN = 1e-9


def _sym(X):
    return 0.5 * (X + np.swapaxes(X, -1, -2))


def spectral_radius(A) -> np.ndarray:
    """Spectral radius of one matrix or of each matrix in a stack."""
    return np.max(np.abs(np.linalg.eigvals(A)), axis=-1)


def dlyap(Acl, W, tol=1e-14, max_iter=100):
    """Solve ``P = W + Acl' P Acl`` by squaring: ``P += A' P A``, ``A <- A @ A``.

    Raises :class:`UnstableError` if any closed loop has spectral radius at
    least ``1 - 1e-9``.
    """
    A = np.array(Acl, dtype=float)
    P = _sym(np.array(W, dtype=float))
    single = A.ndim == 2
    if single:
        A, P = A[None], P[None]
    rho = spectral_radius(A)
    if np.any(rho >= 1.0 - STABILITY_MARGIN):
        i = int(np.argmax(rho))
        raise UnstableError(f"closed loop {i} has spectral radius {rho[i]:.12g} >= 1", index=i)
    for _ in range(max_iter):
        inc = np.swapaxes(A, 1, 2) @ P @ A
        P = _sym(P + inc)
        A = A @ A
        if np.all(np.linalg.norm(inc, axis=(1, 2)) <= tol * np.linalg.norm(P, axis=(1, 2))):
            break
    return P[0] if single else P


def dare(A, B, Q, R, tol=1e-13, max_iter=100_000):
    """Stabilizing DARE solution by fixed-point Riccati iteration from ``P = Q``.

    Returns ``(P, K)`` with ``K = -(R + B'PB)^{-1} B'PA``. Divergence or no
    convergence within ``max_iter`` raises :class:`UnstabilizableError`.
    """
    A = np.array(A, dtype=float)
    B = np.array(B, dtype=float)
    single = A.ndim == 2
    if single:
        A, B = A[None], B[None]
    Q = np.asarray(Q, dtype=float)
    R = np.asarray(R, dtype=float)
    At, Bt = np.swapaxes(A, 1, 2), np.swapaxes(B, 1, 2)
    P = np.broadcast_to(Q, A.shape).copy()
    for _ in range(max_iter):
        PB = P @ B
        G = np.linalg.solve(R + Bt @ PB, Bt @ P @ A)
        P_new = _sym(Q + At @ P @ A - At @ PB @ G)
        diff = np.linalg.norm(P_new - P, axis=(1, 2))
        size = np.linalg.norm(P_new, axis=(1, 2))
        bad = ~np.isfinite(size) | (size > 1e150)
        if np.any(bad):
            i = int(np.argmax(bad))
            raise UnstabilizableError(f"Riccati iteration diverged for pair {i}", index=i)
        P = P_new
        if np.all(diff <= tol * size):
            break
    else:
        i = int(np.argmax(diff / size))
        raise UnstabilizableError(f"Riccati iteration did not converge for pair {i}", index=i)
    K = -np.linalg.solve(R + Bt @ P @ B, Bt @ P @ A)
    return (P[0], K[0]) if single else (P, K)


# ---------------------------------------------------------------------------
# costs


def _points(model, p):
    return np.atleast_2d(model.domain.check(p))


def closed_loop_at(model, gains, points):
    """``(Acl, K(p))`` stacked over ``points``."""
    points = _points(model, points)
    alpha = evaluate_weights(model, points)
    A, B = evaluate_system(model, points)
    Kp = blend_gains(alpha, gains)
    return A + B @ Kp, Kp


def pointwise_inf_cost(model, gains, p, cost: CostSpec):
    """``tr(P_inf(p; K) Sigma0)``; scalar for one point, array for a stack."""
    gains = check_gains(model, gains)
    pts = _points(model, p)
    Acl, Kp = closed_loop_at(model, gains, pts)
    W = cost.Q + np.swapaxes(Kp, 1, 2) @ cost.R @ Kp
    P = dlyap(Acl, W)
    J = np.einsum("krc,cr->k", P, cost.Sigma0)
    return float(J[0]) if np.asarray(p).ndim <= 1 and pts.shape[0] == 1 else J


def integrated_inf_cost(model, gains, rule: QuadratureRule, cost: CostSpec) -> float:
    try:
        J = pointwise_inf_cost(model, gains, rule.nodes, cost)
    except UnstableError as exc:
        raise UnstableError(f"unstable at quadrature node {exc.index} {rule.nodes[exc.index].tolist()}", exc.index) from exc
    return float(rule.weights @ np.atleast_1d(J))


def pointwise_riccati(model, points, cost: CostSpec):
    """Frozen-parameter DARE costs ``tr(P_ric(p) Sigma0)`` at each point."""
    pts = _points(model, points)
    A, B = evaluate_system(model, pts)
    P, _ = dare(A, B, cost.Q, cost.R)
    return np.einsum("krc,cr->k", P, cost.Sigma0)


def riccati_lower_bound(model, rule: QuadratureRule, cost: CostSpec):
    """Return ``(J_ric, per-node J_ric(p_k))``."""
    try:
        Jp = pointwise_riccati(model, rule.nodes, cost)
    except UnstabilizableError as exc:
        raise UnstabilizableError(f"node {exc.index} {rule.nodes[exc.index].tolist()} is not stabilizable", exc.index) from exc
    return float(rule.weights @ Jp), Jp


def vertex_riccati_gains(model, cost: CostSpec):
    """DARE solutions and gains at each vertex pair ``(A_i, B_i)``."""
    try:
        return dare(model.A, model.B, cost.Q, cost.R)
    except UnstabilizableError as exc:
        raise UnstabilizableError(f"vertex {exc.index} is not stabilizable", exc.index) from exc


# ---------------------------------------------------------------------------
# stability and grids


def uniform_grid(domain, counts) -> np.ndarray:
    """Uniform tensor grid (faces included), last dimension fastest."""
    counts = np.broadcast_to(np.asarray(counts, dtype=int), (domain.d,))
    axes = [np.linspace(domain.lo[k], domain.hi[k], counts[k]) if counts[k] > 1 else
            np.array([0.5 * (domain.lo[k] + domain.hi[k])]) for k in range(domain.d)]
    return np.array(np.meshgrid(*axes, indexing="ij")).reshape(domain.d, -1).T


def default_eval_counts(d: int):
    """About 1280 points in total."""
    table = {1: [1280], 2: [40, 32], 3: [16, 10, 8]}
    return table.get(d, [max(2, round(1280 ** (1.0 / d)))] * d)


def max_spectral_radius(model, gains, grid):
    """``(rho_max, argmax point)`` of the closed loop over the points in ``grid``."""
    pts = _points(model, grid)
    Acl, _ = closed_loop_at(model, check_gains(model, gains), pts)
    rho = spectral_radius(Acl)
    i = int(np.argmax(rho))
    return float(rho[i]), pts[i]


def is_stable(rho) -> bool:
    return bool(rho < 1.0 - STABILITY_MARGIN)


# ---------------------------------------------------------------------------
# fixed-point and Lyapunov checks


class FixedPointResidual(NamedTuple):
    stationarity: float
    lyapunov: float


def fixed_point_residual(model, gains, cost: CostSpec, rule: QuadratureRule) -> FixedPointResidual:
    """Residuals of the two integrated-fixed-point conditions at ``gains``.

    The cost-to-go is the pointwise Lyapunov solution for ``gains``; the
    stationarity residual is the Frobenius norm of the stage gradient of the
    one-step cost using that cost-to-go, and the Lyapunov residual is the
    largest relative defect of the Lyapunov equation over the nodes.
    """
    gains = check_gains(model, gains)
    nodes = node_data(model, rule)
    Kp = blend_gains(nodes.alpha, gains)
    Acl = nodes.A + nodes.B @ Kp
    W = cost.Q + np.swapaxes(Kp, 1, 2) @ cost.R @ Kp
    P = dlyap(Acl, W)
    defect = P - W - np.swapaxes(Acl, 1, 2) @ P @ Acl
    lyap = float(np.max(np.linalg.norm(defect, axis=(1, 2)) / (1.0 + np.linalg.norm(P, axis=(1, 2)))))
    data = build_stage_data(model, cost, P, nodes=nodes)
    return FixedPointResidual(float(np.linalg.norm(stage_gradient(gains, data))), lyap)


@dataclass
class LyapunovCheck:
    passed: bool
    margin: float  # max over points of lambda_max(Q + K'RK + Acl' QN Acl - QN)
    worst_point: np.ndarray


def lyapunov_condition_check(QN, model, Kfeas, grid, cost: CostSpec, tol=1e-9) -> LyapunovCheck:
    """Check ``Q + K'RK + Acl' QN Acl <= QN`` at every point of ``grid``.

    Passes when the largest eigenvalue of the difference is at most
    ``tol * (1 + ||QN||_2)``.
    """
    QN = np.asarray(QN, dtype=float)
    pts = _points(model, grid)
    Acl, Kp = closed_loop_at(model, check_gains(model, Kfeas), pts)
    D = cost.Q + np.swapaxes(Kp, 1, 2) @ cost.R @ Kp + np.swapaxes(Acl, 1, 2) @ QN @ Acl - QN
    lam = np.linalg.eigvalsh(_sym(D))[:, -1]
    i = int(np.argmax(lam))
    thresh = tol * (1.0 + np.linalg.norm(QN, 2))
    return LyapunovCheck(bool(lam[i] <= thresh), float(lam[i]), pts[i])


# ---------------------------------------------------------------------------
# simulation


@dataclass
class Trajectory:
    x: np.ndarray  # (steps + 1, n)
    u: np.ndarray  # (steps, m)
    stage_cost: np.ndarray | None  # (steps,), when a cost is given


def simulate_frozen(model, gains, p, x0, steps, cost: CostSpec | None = None) -> Trajectory:
    """Closed-loop response with the scheduling parameter frozen at ``p``."""
    Acl, Kp = closed_loop_at(model, check_gains(model, gains), _points(model, p))
    Acl, Kp = Acl[0], Kp[0]
    x = np.zeros((steps + 1, model.n))
    x[0] = x0
    with np.errstate(over="ignore", invalid="ignore"):
        for t in range(steps):
            x[t + 1] = Acl @ x[t]
        u = x[:-1] @ Kp.T
        running = None
        if cost is not None:
            running = np.einsum("ti,ij,tj->t", x[:-1], cost.Q, x[:-1]) + np.einsum("ti,ij,tj->t", u, cost.R, u)
    return Trajectory(x, u, running)


# ---------------------------------------------------------------------------
# report


@dataclass
class EvalReport:
    rho_max: float
    rho_argmax: list
    stable: bool
    J_inf: float | None
    J_ric: float
    gap: float | None
    worst_pointwise_gap: float | None
    fixed_point: FixedPointResidual | None
    pointwise: dict = field(default_factory=dict, repr=False)

    def to_dict(self):
        return {
            "rho_max": self.rho_max,
            "rho_argmax": list(self.rho_argmax),
            "stable": self.stable,
            "J_inf": self.J_inf,
            "J_ric": self.J_ric,
            "gap": self.gap,
            "worst_pointwise_gap": self.worst_pointwise_gap,
            "fixed_point": None if self.fixed_point is None else self.fixed_point._asdict(),
        }


def evaluate_controller(model: PolytopicModel, gains, cost: CostSpec, rule: QuadratureRule, grid) -> EvalReport:
    """Full evaluation: stability scan, integrated costs, gaps, fixed-point residuals.

    ``pointwise`` holds per-grid-point ``rho``, ``J_inf_p`` (NaN where
    unstable), ``J_ric_p`` and ``gap_p``.
    """
    gains = check_gains(model, gains)
    pts = _points(model, grid)
    Acl, Kp = closed_loop_at(model, gains, pts)
    rho = spectral_radius(Acl)
    J_ric_p = pointwise_riccati(model, pts, cost)
    J_inf_p = np.full(pts.shape[0], np.nan)
    ok = rho < 1.0 - STABILITY_MARGIN
    if np.any(ok):
        W = cost.Q + np.swapaxes(Kp[ok], 1, 2) @ cost.R @ Kp[ok]
        J_inf_p[ok] = np.einsum("krc,cr->k", dlyap(Acl[ok], W), cost.Sigma0)
    gap_p = (J_inf_p - J_ric_p) / J_ric_p
    J_ric, _ = riccati_lower_bound(model, rule, cost)
    i = int(np.argmax(rho))
    node_rho = spectral_radius(closed_loop_at(model, gains, rule.nodes)[0])
    stable = bool(np.all(ok) and np.all(node_rho < 1.0 - STABILITY_MARGIN))
    J_inf = gap = worst = fp = None
    if stable:
        J_inf = integrated_inf_cost(model, gains, rule, cost)
        gap = (J_inf - J_ric) / J_ric
        worst = float(np.nanmax(gap_p))
        fp = fixed_point_residual(model, gains, cost, rule)
    return EvalReport(
        rho_max=float(rho[i]),
        rho_argmax=pts[i].tolist(),
        stable=stable,
        J_inf=J_inf,
        J_ric=J_ric,
        gap=gap,
        worst_pointwise_gap=worst,
        fixed_point=fp,
        pointwise={"points": pts, "rho": rho, "J_inf_p": J_inf_p, "J_ric_p": J_ric_p, "gap_p": gap_p},
    )
