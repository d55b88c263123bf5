"""Tensor-product Gauss-Legendre rules for the uniform measure on a box."""
from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .model import InterpolatedFactor, ParameterDomain, PolytopicModel

DEFAULT_INTERP_ORDER = 8
CHECK_INTERP_ORDER = 12


@dataclass(frozen=True)
class QuadratureRule:
    nodes: np.ndarray  # (Nq, d)
    weights: np.ndarray  # (Nq,), sums to one

    def __post_init__(self):
        nodes = np.atleast_2d(np.array(self.nodes, dtype=float))
        weights = np.array(self.weights, dtype=float).ravel()
        if nodes.shape[0] != weights.size:
            raise ValueError("nodes and weights disagree in length")
        if np.any(weights <= 0):
            raise ValueError("quadrature weights must be positive")
        nodes.setflags(write=False)
        weights.setflags(write=False)
        object.__setattr__(self, "nodes", nodes)
        object.__setattr__(self, "weights", weights)

    def __len__(self):
        return self.weights.size


def _legendre(x, order):
    """P_order(x) and its derivative by the three-term recurrence."""
    p0, p1 = np.ones_like(x), x.copy()
    for k in range(2, order + 1):
        p0, p1 = p1, ((2 * k - 1) * x * p1 - (k - 1) * p0) / k
    dp = order * (x * p1 - p0) / (x * x - 1.0)
    return p1, dp


def legendre_nodes(order: int, tol: float = 1e-15, max_iter: int = 100):
    """Gauss-Legendre nodes and weights on [-1, 1] by Newton iteration on P_order."""
    if order < 1:
        raise ValueError("order must be >= 1")
    x = np.cos(np.pi * (np.arange(order) + 0.75) / (order + 0.5))
    for _ in range(max_iter):
        p, dp = _legendre(x, order)
        dx = p / dp
        x = x - dx
        if np.max(np.abs(dx)) <= tol:
            break
    _, dp = _legendre(x, order)
    w = 2.0 / ((1.0 - x * x) * dp * dp)
    idx = np.argsort(x)
    return x[idx], w[idx]


def _axis_rule(lo, hi, order, breaks=None):
    t, w = legendre_nodes(order)
    edges = np.array([lo, hi]) if breaks is None else np.unique(np.concatenate([[lo, hi], breaks]))
    nodes, weights = [], []
    for a, b in zip(edges[:-1], edges[1:]):
        nodes.append(0.5 * (a + b) + 0.5 * (b - a) * t)
        weights.append(0.5 * w * (b - a) / (hi - lo))
    nodes, weights = np.concatenate(nodes), np.concatenate(weights)
    return nodes, weights / weights.sum()


def gauss_legendre(domain: ParameterDomain, orders, breakpoints=None, density=None) -> QuadratureRule:
    """Tensor Gauss-Legendre rule normalized to a probability measure.

    ``orders`` gives the number of points per dimension (per sub-interval when
    ``breakpoints`` splits a dimension into a composite rule). ``density`` is
    an optional positive callable on ``(Nq, d)`` nodes multiplying the uniform
    weights before renormalization.
    """
    orders = np.broadcast_to(np.asarray(orders, dtype=int), (domain.d,))
    if np.any(orders < 1):
        raise ValueError("orders must be >= 1")
    breakpoints = breakpoints or [None] * domain.d
    axes = [_axis_rule(domain.lo[k], domain.hi[k], orders[k], breakpoints[k]) for k in range(domain.d)]
    grids = np.meshgrid(*[a[0] for a in axes], indexing="ij")
    wgrids = np.meshgrid(*[a[1] for a in axes], indexing="ij")
    nodes = np.stack([g.ravel() for g in grids], axis=1)
    weights = np.prod(np.stack([g.ravel() for g in wgrids], axis=1), axis=1)
    if density is not None:
        weights = weights * np.asarray(density(nodes), dtype=float)
    return QuadratureRule(nodes, weights / weights.sum())


def integrate(rule: QuadratureRule, f):
    """``sum_k w_k f(p_k)``.

    ``f`` is either an array whose leading axis runs over nodes, or a
    callable ``k -> array`` evaluated at each node index.
    """
    if callable(f):
        vals = [np.asarray(f(k), dtype=float) for k in range(len(rule))]
        shapes = {v.shape for v in vals}
        if len(shapes) != 1:
            raise ValueError(f"integrand shape varies across nodes: {sorted(shapes)}")
        vals = np.array(vals)
    else:
        vals = np.asarray(f, dtype=float)
        if vals.shape[0] != len(rule):
            raise ValueError(f"integrand has {vals.shape[0]} node values, rule has {len(rule)}")
    return np.tensordot(rule.weights, vals, axes=1)


def _breaks(factor):
    if isinstance(factor, InterpolatedFactor):
        return factor.grid[1:-1]
    return None


def rule_for_model(model: PolytopicModel, order=None, check=True, composite=True) -> QuadratureRule:
    """Default rule for a model's basis.

    Hat and interpolated factors are piecewise linear, so a composite rule
    split at their breakpoints integrates basis products exactly at
    ``order >= 2`` (the default). With ``composite=False`` a global tensor
    Gauss rule of order 8 is used instead, and its Gram matrix is compared
    against order 12; a RuntimeWarning is emitted when the relative drift
    exceeds 1e-6.
    """
    from .model import gram_matrix

    factors = model.basis.factors
    if composite:
        order = 2 if order is None else order
        return gauss_legendre(model.domain, order, [_breaks(f) for f in factors])
    order = DEFAULT_INTERP_ORDER if order is None else order
    rule = gauss_legendre(model.domain, order)
    if check:
        ref = gauss_legendre(model.domain, max(CHECK_INTERP_ORDER, int(np.max(order)) + 4))
        g1, g2 = gram_matrix(model, rule), gram_matrix(model, ref)
        drift = np.linalg.norm(g1 - g2) / np.linalg.norm(g2)
        if drift > 1e-6:
            warnings.warn(f"quadrature order {order} Gram drift {drift:.2e} exceeds 1e-6", RuntimeWarning)
    return rule
