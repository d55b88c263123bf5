"""Built-in benchmark families (stand-ins for externally supplied vertex data)."""
from __future__ import annotations

import numpy as np
import scipy.linalg

from .errors import ConstructionError
from .evaluation import dare, dlyap
from .model import ParameterDomain, PolytopicModel, hat_basis

FAMILIES = ("scalar-hat", "msd-qlpv", "random-polytopic")


def scalar_hat(a0=0.5, a1=1.5, b=1.0, lo=0.0, hi=1.0) -> PolytopicModel:
    """``x+ = a(p) x + b u`` with ``a`` affine between ``a0`` at ``lo`` and ``a1`` at ``hi``."""
    domain = ParameterDomain([lo], [hi])
    A = np.array([[[a0]], [[a1]]])
    B = np.full((2, 1, 1), float(b))
    return PolytopicModel(domain, hat_basis(domain, [2]), A, B)


def msd_matrices(k, c, mass=1.0, dt=0.1, carts=1, coupling=0.5):
    """Forward-Euler mass-spring-damper with stiffness ``k`` and damping ``c``.

    With ``carts=2`` a second cart is attached through a spring of stiffness
    ``coupling`` and the input acts on the first cart only (n=4).
    """
    if carts == 1:
        Ac = np.array([[0.0, 1.0], [-k / mass, -c / mass]])
        Bc = np.array([[0.0], [1.0 / mass]])
    elif carts == 2:
        kc = coupling
        Ac = np.array([
            [0.0, 1.0, 0.0, 0.0],
            [-(k + kc) / mass, -c / mass, kc / mass, 0.0],
            [0.0, 0.0, 0.0, 1.0],
            [kc / mass, 0.0, -(k + kc) / mass, -c / mass],
        ])
        Bc = np.array([[0.0], [1.0 / mass], [0.0], [0.0]])
    else:
        raise ValueError("carts must be 1 or 2")
    n = Ac.shape[0]
    return np.eye(n) + dt * Ac, dt * Bc


def msd_qlpv(d=2, knots=3, k_range=(0.5, 2.0), c_range=(-0.2, 0.4), c_fixed=None, mass=1.0, dt=0.1,
             carts=1, coupling=0.5) -> PolytopicModel:
    """Mass-spring-damper with scheduled stiffness (and damping when ``d=2``).

    The system matrices are affine in ``(k, c)``, so hat bases on any knot
    grid represent them exactly; the vertices are the systems at the knots.
    Euler discretization gives ``|z|^2 = 1 - dt c + dt^2 k`` for the
    oscillatory pair, so the defaults leave part of the box open-loop
    unstable (negative damping for ``d=2``, stiff springs at ``c_fixed`` for
    ``d=1``). ``c_fixed`` defaults to ``0.1 * carts`` so that the stiffer
    coupled mode also crosses the unit circle inside the box.
    """
    if c_fixed is None:
        c_fixed = 0.1 * carts
    if d == 1:
        domain = ParameterDomain([k_range[0]], [k_range[1]])
    elif d == 2:
        domain = ParameterDomain([k_range[0], c_range[0]], [k_range[1], c_range[1]])
    else:
        raise ValueError("msd-qlpv supports d in {1, 2}")
    knots = np.broadcast_to(np.asarray(knots, dtype=int), (d,))
    basis = hat_basis(domain, knots)
    axes = [np.linspace(domain.lo[j], domain.hi[j], knots[j]) for j in range(d)]
    pts = np.array(np.meshgrid(*axes, indexing="ij")).reshape(d, -1).T
    A, B = [], []
    for p in pts:
        k = p[0]
        c = p[1] if d == 2 else c_fixed
        Ai, Bi = msd_matrices(k, c, mass, dt, carts, coupling)
        A.append(Ai)
        B.append(Bi)
    return PolytopicModel(domain, basis, np.array(A), np.array(B))


def _sqrtm_pd(X):
    lam, V = np.linalg.eigh(X)
    return V @ np.diag(np.sqrt(lam)) @ V.T


def _common_riccati(n, m, nv, rng, spread, q=1.0, r=1.0):
    """Vertices ``(A_i, B0)`` whose DAREs (with ``Q = qI``, ``R = rI``) share one solution.

    For fixed ``P > Q`` and ``B0`` the DARE reads ``A' S A = P - Q`` with
    ``S = P - P B0 (R + B0' P B0)^{-1} B0' P``, solved by
    ``A = S^{-1/2} U (P - Q)^{1/2}`` for any orthogonal ``U``.
    """
    G = rng.standard_normal((n, n))
    P = q * np.eye(n) + G @ G.T + np.eye(n)
    B0 = rng.standard_normal((n, m))
    M = r * np.eye(m) + B0.T @ P @ B0
    S = P - P @ B0 @ np.linalg.solve(M, B0.T @ P)
    left = np.linalg.inv(_sqrtm_pd(0.5 * (S + S.T)))
    right = _sqrtm_pd(P - q * np.eye(n))
    A = []
    for _ in range(nv):
        X = spread * rng.standard_normal((n, n))
        U = scipy.linalg.expm(X - X.T)
        A.append(left @ U @ right)
    return np.array(A), np.broadcast_to(B0, (nv, n, m)).copy()


def random_polytopic(n=3, m=1, d=1, knots=2, seed=0, rho_nominal=1.05, spread=0.3,
                     common_riccati=False) -> PolytopicModel:
    """Seeded random vertices that are jointly stabilizable by construction.

    A nominal pair ``(A0, B0)`` with open-loop spectral radius ``rho_nominal``
    is drawn, ``K0`` is its LQR gain and ``P0`` solves
    ``P0 = I + Acl0' P0 Acl0``. Each vertex is ``(A0 + E_i, B0 + F_i)`` with
    the perturbation shrunk until ``||P0^{1/2} (A_i + B_i K0) P0^{-1/2}||_2`` is below
    ``max(0.999, (1 + c0) / 2) < 1``, where ``c0`` is the nominal value.
    Every point of the box then has ``A(p) + B(p) K0`` contracting in the
    ``P0`` norm, so constant vertex gains ``K0`` are jointly stabilizing.

    With ``common_riccati=True`` the input matrix is shared and every vertex
    has the same Riccati solution under ``Q = I``, ``R = I`` (``rho_nominal``
    is then unused). Blending the vertex Riccati gains keeps that solution a
    valid Lyapunov-type terminal cost over the whole box.
    """
    rng = np.random.default_rng(seed)
    domain = ParameterDomain(np.zeros(d), np.ones(d))
    basis = hat_basis(domain, knots)
    if common_riccati:
        A, B = _common_riccati(n, m, basis.nv, rng, spread)
        return PolytopicModel(domain, basis, A, B)
    A0 = rng.standard_normal((n, n))
    A0 *= rho_nominal / np.max(np.abs(np.linalg.eigvals(A0)))
    B0 = rng.standard_normal((n, m))
    _, K0 = dare(A0, B0, np.eye(n), np.eye(m))
    Acl0 = A0 + B0 @ K0
    P0 = dlyap(Acl0, np.eye(n))
    lam, V = np.linalg.eigh(P0)
    S, Sinv = V @ np.diag(np.sqrt(lam)) @ V.T, V @ np.diag(1 / np.sqrt(lam)) @ V.T
    # the nominal contraction is < 1 but may itself exceed 0.999
    target = max(0.999, 0.5 * (1.0 + np.linalg.norm(S @ Acl0 @ Sinv, 2)))
    A, B = [], []
    for _ in range(basis.nv):
        E = rng.standard_normal((n, n))
        F = rng.standard_normal((n, m))
        scale = spread
        while np.linalg.norm(S @ (Acl0 + scale * (E + F @ K0)) @ Sinv, 2) >= target:
            scale *= 0.5
            if scale < 1e-12:
                raise ConstructionError("cannot shrink vertex perturbations into the contraction region")
        A.append(A0 + scale * E)
        B.append(B0 + scale * F)
    return PolytopicModel(domain, basis, np.array(A), np.array(B))


def generate_benchmark(family: str, **params) -> PolytopicModel:
    if family == "scalar-hat":
        return scalar_hat(**params)
    if family == "msd-qlpv":
        return msd_qlpv(**params)
    if family == "random-polytopic":
        return random_polytopic(**params)
    raise ValueError(f"unknown benchmark family {family!r}; expected one of {FAMILIES}")
