"""One backward stage: integrated stage cost, its gradient and Hessian, solvers,
and propagation of the cost-to-go field.

All node-wise quantities are stacked along a leading axis of length ``Nq``.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .errors import DegenerateStageError, NumericalConsistencyError
from .model import PolytopicModel, blend_gains, check_gains, unvec_gains, vec_gains
from .quadrature import QuadratureRule

PD_TOL = 1e-12
CLIP_TOL = 1e-10
PSD_TOL = 1e-8


def _sym(X):
    return 0.5 * (X + np.swapaxes(X, -1, -2))


@dataclass(frozen=True)
class CostSpec:
    Q: np.ndarray
    R: np.ndarray
    Sigma0: np.ndarray
    QN: np.ndarray | None = None

    def __post_init__(self):
        Q = np.atleast_2d(np.array(self.Q, dtype=float))
        R = np.atleast_2d(np.array(self.R, dtype=float))
        S = np.atleast_2d(np.array(self.Sigma0, dtype=float))
        QN = np.zeros_like(Q) if self.QN is None else np.atleast_2d(np.array(self.QN, dtype=float))
        if Q.shape != S.shape or Q.shape != QN.shape or Q.shape[0] != Q.shape[1] or R.shape[0] != R.shape[1]:
            raise ValueError("Q, Sigma0, QN must be n x n and R must be m x m")
        for name, X, strict in (("Q", Q, True), ("R", R, True), ("Sigma0", S, True), ("QN", QN, False)):
            if not np.allclose(X, X.T, rtol=0, atol=1e-12 * max(1.0, np.abs(X).max())):
                raise ValueError(f"{name} must be symmetric")
            lam = np.linalg.eigvalsh(_sym(X))[0]
            if (strict and lam <= PD_TOL) or (not strict and lam < -PD_TOL):
                raise ValueError(f"{name} must be positive {'definite' if strict else 'semidefinite'} (min eig {lam:.3e})")
        for name, X in (("Q", Q), ("R", R), ("Sigma0", S), ("QN", QN)):
            X = _sym(X)
            X.setflags(write=False)
            object.__setattr__(self, name, X)

    @property
    def n(self):
        return self.Q.shape[0]

    @property
    def m(self):
        return self.R.shape[0]


@dataclass(frozen=True)
class CostToGoField:
    P: np.ndarray  # (Nq, n, n)
    rule: QuadratureRule

    def integral(self, Sigma0) -> float:
        """``sum_k w_k tr(P(p_k) Sigma0)``."""
        return float(self.rule.weights @ np.einsum("krc,cr->k", self.P, Sigma0))

    @classmethod
    def constant(cls, matrix, rule):
        P = np.broadcast_to(np.asarray(matrix, dtype=float), (len(rule),) + np.shape(matrix)).copy()
        return cls(P, rule)


@dataclass(frozen=True)
class NodeData:
    """Model quantities at the quadrature nodes, shared by every stage."""

    weights: np.ndarray  # (Nq,)
    alpha: np.ndarray  # (Nq, Nv)
    A: np.ndarray  # (Nq, n, n)
    B: np.ndarray  # (Nq, n, m)


def node_data(model: PolytopicModel, rule: QuadratureRule) -> NodeData:
    alpha = model.basis(model.domain.check(rule.nodes))
    A = np.einsum("ki,irc->krc", alpha, model.A)
    B = np.einsum("ki,irc->krc", alpha, model.B)
    return NodeData(rule.weights, alpha, A, B)


@dataclass(frozen=True)
class StageData:
    nodes: NodeData
    cost: CostSpec
    Pnext: np.ndarray  # (Nq, n, n)
    M: np.ndarray  # (Nq, m, m):  R + B' P B
    L: np.ndarray  # (Nq, m, n):  B' P A

    @property
    def nv(self):
        return self.nodes.alpha.shape[1]

    @property
    def shape(self):
        return (self.nv, self.cost.m, self.cost.n)


def _clip_psd(P):
    lam = np.linalg.eigvalsh(P)
    worst = lam[:, 0].min()
    if worst < -CLIP_TOL * max(1.0, np.abs(lam).max()):
        raise NumericalConsistencyError(f"cost-to-go has eigenvalue {worst:.3e} below -{CLIP_TOL:g}")
    if worst >= 0:
        return P
    lam_all, V = np.linalg.eigh(P)
    return _sym(np.einsum("kij,kj,klj->kil", V, np.clip(lam_all, 0, None), V))


def build_stage_data(model, cost: CostSpec, Pnext, rule=None, nodes: NodeData | None = None) -> StageData:
    """Cache ``M(p_k)`` and ``L(p_k)`` for one stage.

    ``Pnext`` is a :class:`CostToGoField` or an ``(Nq, n, n)`` array.
    """
    if nodes is None:
        if rule is None and not isinstance(Pnext, CostToGoField):
            raise ValueError("a quadrature rule (or node data) is required when Pnext is a plain array")
        nodes = node_data(model, rule if rule is not None else Pnext.rule)
    P = Pnext.P if isinstance(Pnext, CostToGoField) else np.asarray(Pnext, dtype=float)
    if P.shape != (nodes.weights.size, cost.n, cost.n):
        raise ValueError(f"cost-to-go must have shape {(nodes.weights.size, cost.n, cost.n)}, got {P.shape}")
    P = _clip_psd(_sym(P))
    Bt = np.swapaxes(nodes.B, 1, 2)
    M = _sym(cost.R + Bt @ P @ nodes.B)
    L = Bt @ P @ nodes.A
    if np.linalg.eigvalsh(M)[:, 0].min() <= 0:
        raise NumericalConsistencyError("R + B'PB is not positive definite at some node")
    return StageData(nodes, cost, P, M, L)


def stage_cost(gains, data: StageData) -> float:
    """Integrated one-step cost ``sum_k w_k tr[(Q + K'RK + Acl' P Acl) Sigma0]``."""
    Kp = blend_gains(data.nodes.alpha, gains)
    Acl = data.nodes.A + data.nodes.B @ Kp
    Kt = np.swapaxes(Kp, 1, 2)
    Ph = data.cost.Q + Kt @ data.cost.R @ Kp + np.swapaxes(Acl, 1, 2) @ data.Pnext @ Acl
    return float(data.nodes.weights @ np.einsum("krc,cr->k", Ph, data.cost.Sigma0))


def policy_residual(gains, data: StageData) -> np.ndarray:
    """``E(p_k) = M(p_k) K(p_k) + L(p_k)`` at every node."""
    return data.M @ blend_gains(data.nodes.alpha, gains) + data.L


def stage_gradient(gains, data: StageData) -> np.ndarray:
    """Gradient blocks ``2 sum_k w_k alpha_i(p_k) E(p_k) Sigma0``, shape ``(Nv, m, n)``."""
    E = policy_residual(gains, data)
    return 2.0 * np.einsum("k,ki,kmn->imn", data.nodes.weights, data.nodes.alpha, E) @ data.cost.Sigma0


def stage_hessian(data: StageData, check=True) -> np.ndarray:
    """Dense Hessian in the column-major ``vec`` ordering.

    Block ``(i, j)`` is ``2 sum_k w_k alpha_i alpha_j kron(Sigma0, M(p_k))``.
    """
    nv, m, n = data.shape
    w, alpha = data.nodes.weights, data.nodes.alpha
    kron = np.einsum("ab,kcd->kacbd", data.cost.Sigma0, data.M).reshape(-1, n * m, n * m)
    H = 2.0 * np.einsum("k,ki,kj,kab->iajb", w, alpha, alpha, kron).reshape(nv * m * n, nv * m * n)
    H = 0.5 * (H + H.T)
    if check:
        lam = np.linalg.eigvalsh(H)[0]
        if lam <= PD_TOL:
            raise DegenerateStageError(
                f"stage Hessian not positive definite (lambda_min={lam:.3e}); "
                "the weighting functions must be linearly independent"
            )
    return H


def stage_solve_direct(data: StageData, H=None) -> np.ndarray:
    """Unique stage minimizer from ``H vec(K) = -grad(0)`` via Cholesky."""
    nv, m, n = data.shape
    H = stage_hessian(data) if H is None else H
    g0 = vec_gains(stage_gradient(np.zeros(data.shape), data))
    try:
        factor = scipy.linalg.cho_factor(H, lower=True)
    except np.linalg.LinAlgError as exc:
        raise DegenerateStageError(f"Cholesky factorization of the stage Hessian failed: {exc}") from exc
    return unvec_gains(-scipy.linalg.cho_solve(factor, g0), nv, m, n)


def power_iteration(H, tol=1e-10, max_iter=100_000, seed=0) -> float:
    """Largest eigenvalue of a symmetric PSD matrix."""
    v = np.random.default_rng(seed).standard_normal(H.shape[0])
    v /= np.linalg.norm(v)
    lam = 0.0
    for _ in range(max_iter):
        w = H @ v
        lam_new = float(v @ w)
        nw = np.linalg.norm(w)
        if nw == 0.0:
            return 0.0
        v = w / nw
        if abs(lam_new - lam) <= tol * abs(lam_new):
            return lam_new
        lam = lam_new
    return lam


@dataclass
class GDTelemetry:
    grad_norms: list = field(default_factory=list)
    eta: float = 0.0
    kappa: float = 0.0
    iterations: int = 0
    converged: bool = False

    @property
    def theoretical_rate(self) -> float:
        return 1.0 - 1.0 / self.kappa


def stage_solve_gd(data: StageData, tol=1e-10, max_iter=100_000, K0=None, H=None):
    """Fixed-step gradient descent with ``eta = 1 / sigma_max(H)``.

    Returns ``(gains, telemetry)``. Hitting ``max_iter`` is not an error; the
    last iterate is returned with ``telemetry.converged = False``.
    """
    H = stage_hessian(data) if H is None else H
    lam = np.linalg.eigvalsh(H)
    sigma_max = power_iteration(H)
    tel = GDTelemetry(eta=1.0 / sigma_max, kappa=float(lam[-1] / lam[0]))
    K = np.zeros(data.shape) if K0 is None else np.array(K0, dtype=float)
    g = stage_gradient(K, data)
    tel.grad_norms.append(float(np.linalg.norm(g)))
    while tel.grad_norms[-1] > tol and tel.iterations < max_iter:
        K = K - tel.eta * g
        g = stage_gradient(K, data)
        tel.iterations += 1
        tel.grad_norms.append(float(np.linalg.norm(g)))
    tel.converged = tel.grad_norms[-1] <= tol
    return K, tel


def asymptotic_ratio(grad_norms, lo=1e-11, hi=1e-3) -> float:
    """Geometric-mean contraction of gradient norms within a relative window.

    Only iterates with ``lo <= ||g_k|| / ||g_0|| <= hi`` are used, which skips
    both the transient and the rounding floor.
    """
    g = np.asarray(grad_norms, dtype=float)
    rel = g / g[0]
    idx = np.flatnonzero((rel >= lo) & (rel <= hi))
    if idx.size < 2:
        idx = np.arange(max(0, g.size - 10), g.size)
        if idx.size < 2:
            return float("nan")
    a, b = idx[0], idx[-1]
    return float((g[b] / g[a]) ** (1.0 / (b - a)))


def propagate_cost_to_go(gains, data: StageData) -> np.ndarray:
    """``P_h(p_k) = Q + K'RK + Acl' P_{h+1} Acl`` at every node, symmetrized."""
    Kp = blend_gains(data.nodes.alpha, gains)
    Acl = data.nodes.A + data.nodes.B @ Kp
    Kt = np.swapaxes(Kp, 1, 2)
    P = _sym(data.cost.Q + Kt @ data.cost.R @ Kp + np.swapaxes(Acl, 1, 2) @ data.Pnext @ Acl)
    worst = np.linalg.eigvalsh(P)[:, 0].min()
    if worst < -PSD_TOL:
        raise NumericalConsistencyError(f"propagated cost-to-go has eigenvalue {worst:.3e}")
    return P


def propagate_field(gains, model, cost, Pnext: CostToGoField) -> CostToGoField:
    """Convenience wrapper taking and returning fields."""
    gains = check_gains(model, gains)
    data = build_stage_data(model, cost, Pnext)
    return CostToGoField(propagate_cost_to_go(gains, data), Pnext.rule)
