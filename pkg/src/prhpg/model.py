"""Polytopic qLPV models: parameter box, SNNN weighting basis, vertex systems.

Gains for one stage are stored as an array of shape ``(Nv, m, n)``. The
decision vector stacks the column-major ``vec`` of each vertex gain in
vertex order, see :func:`vec_gains`.

Tensor-product quantities (weights, vertices, quadrature nodes) are
enumerated with the last parameter dimension running fastest.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConstructionError, DegenerateBasisError, DomainError

SNNN_TOL = 1e-10
GRAM_TOL = 1e-12


@dataclass(frozen=True)
class ParameterDomain:
    lo: np.ndarray
    hi: np.ndarray

    def __post_init__(self):
        lo = np.atleast_1d(np.asarray(self.lo, dtype=float))
        hi = np.atleast_1d(np.asarray(self.hi, dtype=float))
        if lo.ndim != 1 or lo.shape != hi.shape or lo.size == 0:
            raise ValueError("lo and hi must be 1-d arrays of equal length >= 1")
        if np.any(~(lo < hi)):
            raise ValueError(f"empty parameter interval: lo={lo}, hi={hi}")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)

    @property
    def d(self) -> int:
        return self.lo.size

    def check(self, points) -> np.ndarray:
        """Return ``points`` as an ``(N, d)`` array, raising if any lies outside the box.

        A slack of 1e-12 times the interval width absorbs rounding on the faces;
        such points are clipped onto the box.
        """
        pts = np.asarray(points, dtype=float)
        pts = pts.reshape(-1, self.d) if pts.ndim <= 1 else pts
        if pts.ndim != 2 or pts.shape[1] != self.d:
            raise DomainError(f"expected points of dimension {self.d}, got shape {pts.shape}")
        slack = 1e-12 * (self.hi - self.lo)
        bad = np.any((pts < self.lo - slack) | (pts > self.hi + slack), axis=1)
        if np.any(bad):
            i = int(np.argmax(bad))
            raise DomainError(f"point {pts[i].tolist()} outside domain [{self.lo.tolist()}, {self.hi.tolist()}]")
        return np.clip(pts, self.lo, self.hi)


# ---------------------------------------------------------------------------
# weighting basis


@dataclass(frozen=True)
class ConstantFactor:
    """Single weighting function equal to one."""

    @property
    def count(self) -> int:
        return 1

    def __call__(self, x):
        return np.ones((np.asarray(x).size, 1))

    def to_dict(self):
        return {"kind": "constant"}


@dataclass(frozen=True)
class InterpolatedFactor:
    """Piecewise-linear interpolation of discretized weighting rows.

    ``rows[g, j]`` is the value of function ``j`` at ``grid[g]``. Convex
    combinations of SNNN rows are SNNN, so the interpolant inherits the
    property from its nodes.
    """

    grid: np.ndarray
    rows: np.ndarray

    def __post_init__(self):
        grid = np.asarray(self.grid, dtype=float)
        rows = np.asarray(self.rows, dtype=float)
        if grid.ndim != 1 or grid.size < 2 or np.any(np.diff(grid) <= 0):
            raise ValueError("grid must be strictly increasing with at least 2 points")
        if rows.ndim != 2 or rows.shape[0] != grid.size:
            raise ValueError(f"rows must have shape ({grid.size}, r), got {rows.shape}")
        object.__setattr__(self, "grid", grid)
        object.__setattr__(self, "rows", rows)

    @property
    def count(self) -> int:
        return self.rows.shape[1]

    def __call__(self, x):
        x = np.asarray(x, dtype=float).ravel()
        return np.stack([np.interp(x, self.grid, self.rows[:, j]) for j in range(self.count)], axis=1)

    def to_dict(self):
        return {"kind": "interpolated", "grid": self.grid.tolist(), "rows": self.rows.tolist()}


class HatFactor(InterpolatedFactor):
    """Hat functions on a knot grid (identity rows)."""

    def __init__(self, knots):
        knots = np.asarray(knots, dtype=float)
        super().__init__(knots, np.eye(knots.size))

    @property
    def knots(self):
        return self.grid

    def to_dict(self):
        return {"kind": "hat", "knots": self.grid.tolist()}


def factor_from_dict(spec) -> ConstantFactor | InterpolatedFactor:
    kind = spec.get("kind")
    if kind == "constant":
        return ConstantFactor()
    if kind == "hat":
        return HatFactor(spec["knots"])
    if kind == "interpolated":
        return InterpolatedFactor(spec["grid"], spec["rows"])
    raise ValueError(f"unknown basis factor kind {kind!r}")


@dataclass(frozen=True)
class WeightingBasis:
    """Tensor product of per-dimension weighting families."""

    factors: tuple

    def __post_init__(self):
        object.__setattr__(self, "factors", tuple(self.factors))

    @property
    def d(self) -> int:
        return len(self.factors)

    @property
    def counts(self) -> tuple[int, ...]:
        return tuple(f.count for f in self.factors)

    @property
    def nv(self) -> int:
        return int(np.prod(self.counts))

    def __call__(self, points) -> np.ndarray:
        pts = np.asarray(points, dtype=float).reshape(-1, self.d)
        out = np.ones((pts.shape[0], 1))
        for k, factor in enumerate(self.factors):
            fk = factor(pts[:, k])
            out = (out[:, :, None] * fk[:, None, :]).reshape(pts.shape[0], -1)
        return out

    def to_dict(self):
        return {"kind": "tensor", "factors": [f.to_dict() for f in self.factors]}

    @classmethod
    def from_dict(cls, spec):
        if spec.get("kind") != "tensor":
            raise ValueError(f"unknown basis kind {spec.get('kind')!r}")
        return cls(tuple(factor_from_dict(f) for f in spec["factors"]))


def constant_basis(d=1) -> WeightingBasis:
    return WeightingBasis(tuple(ConstantFactor() for _ in range(d)))


def hat_basis(domain: ParameterDomain, counts) -> WeightingBasis:
    """Hat functions on uniform knots per dimension; a count of 1 gives a constant factor."""
    counts = np.broadcast_to(np.asarray(counts, dtype=int), (domain.d,))
    factors = []
    for k, c in enumerate(counts):
        if c == 1:
            factors.append(ConstantFactor())
        else:
            factors.append(HatFactor(np.linspace(domain.lo[k], domain.hi[k], c)))
    return WeightingBasis(tuple(factors))


# ---------------------------------------------------------------------------
# polytopic model


@dataclass(frozen=True)
class PolytopicModel:
    domain: ParameterDomain
    basis: WeightingBasis
    A: np.ndarray  # (Nv, n, n)
    B: np.ndarray  # (Nv, n, m)

    def __post_init__(self):
        A = np.array(self.A, dtype=float)
        B = np.array(self.B, dtype=float)
        if A.ndim != 3 or A.shape[1] != A.shape[2]:
            raise ValueError(f"vertex A must have shape (Nv, n, n), got {A.shape}")
        if B.ndim != 3 or B.shape[:2] != A.shape[:2]:
            raise ValueError(f"vertex B must have shape (Nv, n, m), got {B.shape}")
        if self.basis.d != self.domain.d:
            raise ValueError("basis and domain dimensions differ")
        if A.shape[0] != self.basis.nv:
            raise ValueError(f"{A.shape[0]} vertices but basis has Nv={self.basis.nv}")
        A.setflags(write=False)
        B.setflags(write=False)
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "B", B)

    @property
    def nv(self) -> int:
        return self.A.shape[0]

    @property
    def n(self) -> int:
        return self.A.shape[1]

    @property
    def m(self) -> int:
        return self.B.shape[2]

    @property
    def d(self) -> int:
        return self.domain.d


def _single(p, d):
    p = np.asarray(p)
    return p.ndim == 0 or (p.ndim == 1 and p.size == d)


def evaluate_weights(model: PolytopicModel, p) -> np.ndarray:
    """Weights ``alpha(p)``; shape ``(Nv,)`` for one point or ``(N, Nv)`` for a stack."""
    single = _single(p, model.d)
    alpha = model.basis(model.domain.check(p))
    return alpha[0] if single else alpha


def evaluate_system(model: PolytopicModel, p):
    """Blended ``(A(p), B(p))``."""
    alpha = np.atleast_2d(evaluate_weights(model, p))
    A = np.einsum("ki,irc->krc", alpha, model.A)
    B = np.einsum("ki,irc->krc", alpha, model.B)
    if _single(p, model.d):
        return A[0], B[0]
    return A, B


def blend_gains(alpha, gains) -> np.ndarray:
    """``K(p) = sum_i alpha_i(p) K_i`` for weights of shape ``(Nv,)`` or ``(N, Nv)``."""
    return np.tensordot(alpha, gains, axes=(-1, 0))


def closed_loop(model: PolytopicModel, gains, p) -> np.ndarray:
    """``A(p) + B(p) K(p)`` at one point or a stack of points."""
    gains = check_gains(model, gains)
    alpha = evaluate_weights(model, p)
    A, B = evaluate_system(model, p)
    return A + B @ blend_gains(alpha, gains)


def vertex_cross_terms(model: PolytopicModel, gains) -> np.ndarray:
    """Array ``G[i, j] = A_i + B_i K_j`` of shape ``(Nv, Nv, n, n)``."""
    gains = check_gains(model, gains)
    return model.A[:, None] + np.einsum("irm,jmc->ijrc", model.B, gains)


def check_gains(model: PolytopicModel, gains) -> np.ndarray:
    gains = np.asarray(gains, dtype=float)
    if gains.shape != (model.nv, model.m, model.n):
        raise ValueError(f"gains must have shape {(model.nv, model.m, model.n)}, got {gains.shape}")
    return gains


def zero_gains(model: PolytopicModel) -> np.ndarray:
    return np.zeros((model.nv, model.m, model.n))


def vec_gains(gains) -> np.ndarray:
    """Stack column-major ``vec(K_i)`` for ``i = 1..Nv``."""
    gains = np.asarray(gains)
    return gains.transpose(0, 2, 1).reshape(-1)


def unvec_gains(v, nv, m, n) -> np.ndarray:
    return np.asarray(v).reshape(nv, n, m).transpose(0, 2, 1)


def gram_matrix(model: PolytopicModel, rule) -> np.ndarray:
    """Gram matrix of the weighting functions under the quadrature measure."""
    alpha = model.basis(model.domain.check(rule.nodes))
    gram = alpha.T @ (rule.weights[:, None] * alpha)
    gram = 0.5 * (gram + gram.T)
    lam = np.linalg.eigvalsh(gram)[0]
    if lam <= GRAM_TOL:
        raise DegenerateBasisError(
            f"Gram matrix is not positive definite (lambda_min={lam:.3e}); "
            "weighting functions are not linearly independent under the quadrature measure"
        )
    return gram


def check_snnn(model: PolytopicModel, points, tol=SNNN_TOL):
    """Return ``(max |sum - 1|, min alpha)`` over ``points``; raise if either exceeds ``tol``."""
    alpha = model.basis(model.domain.check(points))
    sum_err = float(np.max(np.abs(alpha.sum(axis=1) - 1.0)))
    min_w = float(alpha.min())
    if sum_err > tol or min_w < -tol:
        raise ConstructionError(f"SNNN violated: sum error {sum_err:.2e}, min weight {min_w:.2e}")
    return sum_err, min_w


# ---------------------------------------------------------------------------
# TP model transformation


@dataclass
class TPTransformResult:
    model: PolytopicModel
    ranks: tuple
    singular_values: list  # per mode, of the centered unfolding
    discarded_bound: float
    max_error: float  # max over grid points of the Frobenius error of [A B]
    rel_error: float  # max_error / max_g ||[A B](p_g)||_F


def _enclosing_simplex_weights(U):
    """Map rows of ``U`` (which satisfy ``U c = 1`` for some c) to barycentric coordinates.

    Vertex rows are picked by successive projection; the simplex they span is
    then dilated about its centroid just enough to contain every row.
    """
    g, r = U.shape
    if r == 1:
        return np.ones((g, 1))
    R = U.copy()
    idx = []
    for _ in range(r):
        norms = np.linalg.norm(R, axis=1)
        i = int(np.argmax(norms))
        if norms[i] <= 1e-12 * max(1.0, np.linalg.norm(U)):
            raise ConstructionError("weighting rows are affinely dependent; cannot build a simplex")
        idx.append(i)
        u = R[i] / norms[i]
        R = R - np.outer(R @ u, u)
    lam = np.linalg.solve(U[idx].T, U.T).T
    scale = max(1.0, float(np.max(1.0 - r * lam.min(axis=1))))
    return lam / scale + (1.0 - 1.0 / scale) / r


def tp_transform(sampler, domain: ParameterDomain, grid, ranks=None, rank_tol=1e-12) -> TPTransformResult:
    """Build a polytopic model from a sampled qLPV function by HOSVD.

    Parameters
    ----------
    sampler : callable
        ``p -> (A(p), B(p))`` for a point ``p`` of shape ``(d,)``.
    domain : ParameterDomain
    grid : sequence of int
        Number of uniformly spaced samples per dimension (faces included).
    ranks : sequence of int, optional
        Truncation rank per dimension. ``None`` keeps the numerical rank of
        each unfolding (singular values above ``rank_tol`` times the largest).

    Returns
    -------
    TPTransformResult
        The model plus reconstruction diagnostics on the sample grid.

    Notes
    -----
    Sum normalization needs the constant vector in each mode span, so a
    rank-``r`` mode keeps the constant direction plus the leading ``r - 1``
    left singular vectors of the mean-centered unfolding; ``singular_values``
    and ``discarded_bound`` refer to that centered unfolding. Non-negativity
    comes from expressing the rows in barycentric coordinates of an
    enclosing simplex. The core tensor is obtained with pseudo-inverses, so the
    reconstruction is the orthogonal projection of the samples onto the
    retained mode spans.
    """
    grid = [int(g) for g in np.broadcast_to(np.asarray(grid), (domain.d,))]
    if any(g < 2 for g in grid):
        raise ValueError("each grid count must be >= 2")
    axes = [np.linspace(domain.lo[k], domain.hi[k], grid[k]) for k in range(domain.d)]
    samples = []
    for p in np.array(np.meshgrid(*axes, indexing="ij")).reshape(domain.d, -1).T:
        A, B = sampler(p)
        samples.append(np.hstack([np.atleast_2d(A), np.atleast_2d(B)]))
    samples = np.array(samples)
    n, nm = samples.shape[1:]
    S = samples.reshape(*grid, n, nm)

    if ranks is None:
        ranks = [None] * domain.d
    ranks = list(np.broadcast_to(np.asarray(ranks, dtype=object), (domain.d,)))

    factors, weights, used, svals = [], [], [], []
    bound = 0.0
    for k in range(domain.d):
        unf = np.moveaxis(S, k, 0).reshape(grid[k], -1)
        # constant direction first, then principal directions orthogonal to it
        Z = np.linalg.qr(np.hstack([np.ones((grid[k], 1)), np.eye(grid[k])[:, :-1]]))[0][:, 1:]
        U, s, _ = np.linalg.svd(Z.T @ unf, full_matrices=False)
        U = Z @ U
        svals.append(s)
        scale0 = np.linalg.norm(unf, 2)
        r = ranks[k]
        if r is None:
            r = 1 + (int(np.sum(s > rank_tol * scale0)) if scale0 > 0 else 0)
        r = int(r)
        if r < 1 or r > 1 + s.size:
            raise ValueError(f"rank {r} for dimension {k} must lie in [1, {1 + s.size}]")
        bound += float(np.sum(s[r - 1:]))
        Uk = np.hstack([np.full((grid[k], 1), 1.0 / np.sqrt(grid[k])), U[:, :r - 1]])
        W = _enclosing_simplex_weights(Uk)
        sum_err = np.max(np.abs(W.sum(axis=1) - 1.0))
        if W.min() < -1e-8 or sum_err > 1e-8:
            raise ConstructionError(
                f"dimension {k}: SNNN normalization failed (min weight {W.min():.2e}, sum error {sum_err:.2e})"
            )
        weights.append(W)
        used.append(W.shape[1])
        factors.append(InterpolatedFactor(axes[k], W) if W.shape[1] > 1 else ConstantFactor())

    core = S
    for k, W in enumerate(weights):
        core = np.moveaxis(np.tensordot(np.linalg.pinv(W), core, axes=(1, k)), 0, k)
    recon = core
    for k, W in enumerate(weights):
        recon = np.moveaxis(np.tensordot(W, recon, axes=(1, k)), 0, k)

    err = np.linalg.norm((recon - S).reshape(-1, n, nm), axis=(1, 2))
    scale = np.max(np.linalg.norm(samples, axis=(1, 2)))
    vertices = core.reshape(-1, n, nm)
    model = PolytopicModel(domain, WeightingBasis(tuple(factors)), vertices[:, :, :n], vertices[:, :, n:])
    return TPTransformResult(
        model=model,
        ranks=tuple(used),
        singular_values=svals,
        discarded_bound=bound,
        max_error=float(err.max()),
        rel_error=float(err.max() / scale) if scale > 0 else float(err.max()),
    )


# ---------------------------------------------------------------------------
# JSON interchange


def model_to_dict(model: PolytopicModel) -> dict:
    return {
        "n": model.n,
        "m": model.m,
        "d": model.d,
        "lo": model.domain.lo.tolist(),
        "hi": model.domain.hi.tolist(),
        "basis": model.basis.to_dict(),
        "vertices": [
            {"A": A.reshape(-1).tolist(), "B": B.reshape(-1).tolist()} for A, B in zip(model.A, model.B)
        ],
    }


def model_from_dict(data: dict) -> PolytopicModel:
    n, m, d = int(data["n"]), int(data["m"]), int(data["d"])
    domain = ParameterDomain(data["lo"], data["hi"])
    if domain.d != d:
        raise ValueError(f"d={d} but lo/hi have length {domain.d}")
    basis = WeightingBasis.from_dict(data["basis"])
    A = np.array([np.reshape(v["A"], (n, n)) for v in data["vertices"]], dtype=float)
    B = np.array([np.reshape(v["B"], (n, m)) for v in data["vertices"]], dtype=float)
    return PolytopicModel(domain, basis, A, B)


def save_model(model: PolytopicModel, path):
    Path(path).write_text(json.dumps(model_to_dict(model), indent=2))


def load_model(path) -> PolytopicModel:
    return model_from_dict(json.loads(Path(path).read_text()))
