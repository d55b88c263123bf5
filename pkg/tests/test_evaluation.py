import numpy as np
import pytest
import scipy.linalg
from hypothesis import given, settings, strategies as st

from prhpg.benchmarks import msd_qlpv, scalar_hat
from prhpg.errors import UnstabilizableError, UnstableError
from prhpg.evaluation import (
    dare,
    default_eval_counts,
    dlyap,
    evaluate_controller,
    fixed_point_residual,
    integrated_inf_cost,
    lyapunov_condition_check,
    max_spectral_radius,
    pointwise_inf_cost,
    pointwise_riccati,
    riccati_lower_bound,
    simulate_frozen,
    spectral_radius,
    uniform_grid,
    vertex_riccati_gains,
)
from prhpg.model import ParameterDomain, PolytopicModel, closed_loop, hat_basis
from prhpg.quadrature import gauss_legendre, rule_for_model
from prhpg.stage import CostSpec
from prhpg.sweep import rhpg_synthesize

from conftest import lti_model, random_spd

PHI = (1 + np.sqrt(5)) / 2
ONE = [[1.0]]
UNIT = CostSpec(ONE, ONE, ONE)


def stable_matrix(rng, n, rho=0.9):
    A = rng.standard_normal((n, n))
    return A * rho / spectral_radius(A)


# --- dlyap ------------------------------------------------------------------


def test_dlyap_examples():
    W = np.diag([1.0, 2.0])
    np.testing.assert_array_equal(dlyap(np.zeros((2, 2)), W), W)
    assert dlyap([[0.5]], ONE)[0, 0] == pytest.approx(4 / 3, rel=1e-15)
    K = -PHI / (1 + PHI)
    assert dlyap([[1 + K]], [[1 + K * K]])[0, 0] == pytest.approx(PHI, rel=1e-14)


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 10_000), n=st.integers(1, 6), rho=st.floats(0.05, 0.995))
def test_dlyap_residual_and_scipy_oracle(seed, n, rho):
    rng = np.random.default_rng(seed)
    A = stable_matrix(rng, n, rho)
    W = random_spd(rng, n)
    P = dlyap(A, W)
    assert np.linalg.norm(P - W - A.T @ P @ A) <= 1e-10 * (1 + np.linalg.norm(P))
    ref = scipy.linalg.solve_discrete_lyapunov(A.T, W)
    assert np.linalg.norm(P - ref) <= 1e-8 * np.linalg.norm(ref)


def test_dlyap_stack_and_instability():
    rng = np.random.default_rng(1)
    As = np.array([stable_matrix(rng, 3, r) for r in (0.2, 0.6, 0.99)])
    Ws = np.array([random_spd(rng, 3) for _ in range(3)])
    P = dlyap(As, Ws)
    for k in range(3):
        np.testing.assert_allclose(P[k], dlyap(As[k], Ws[k]), rtol=1e-13)
    As[1] *= 1.0 / 0.6
    with pytest.raises(UnstableError) as exc:
        dlyap(As, Ws)
    assert exc.value.index == 1


# --- dare -------------------------------------------------------------------


def test_dare_golden_ratio():
    P, K = dare(ONE, ONE, ONE, ONE)
    assert P[0, 0] == pytest.approx(PHI, abs=1e-12)
    assert K[0, 0] == pytest.approx(-PHI / (1 + PHI), abs=1e-12)
    assert K[0, 0] == pytest.approx(-0.618034, abs=1e-6)


def test_dare_zero_dynamics():
    Q = np.diag([2.0, 3.0])
    P, K = dare(np.zeros((2, 2)), np.ones((2, 1)), Q, ONE)
    np.testing.assert_allclose(P, Q)
    np.testing.assert_array_equal(K, 0.0)


@pytest.mark.parametrize("seed", range(8))
def test_dare_random_against_scipy(seed):
    rng = np.random.default_rng(seed)
    A, B = rng.standard_normal((3, 3)), rng.standard_normal((3, 2))
    Q, R = random_spd(rng, 3), random_spd(rng, 2)
    P, K = dare(A, B, Q, R)
    res = Q + A.T @ P @ A - A.T @ P @ B @ np.linalg.solve(R + B.T @ P @ B, B.T @ P @ A) - P
    assert np.linalg.norm(res) <= 1e-9 * np.linalg.norm(P)
    assert spectral_radius(A + B @ K) < 1
    ref = scipy.linalg.solve_discrete_are(A, B, Q, R)
    assert np.linalg.norm(P - ref) <= 1e-8 * np.linalg.norm(ref)
    # DARE/dlyap consistency
    P2 = dlyap(A + B @ K, Q + K.T @ R @ K)
    assert np.linalg.norm(P - P2) <= 1e-8 * np.linalg.norm(P)


def test_dare_unstabilizable():
    with pytest.raises(UnstabilizableError):
        dare([[1.5]], [[0.0]], ONE, ONE)


# --- pointwise and integrated costs ----------------------------------------


def test_pointwise_cost_at_riccati_gain_equals_bound():
    rng = np.random.default_rng(3)
    A, B = rng.standard_normal((3, 3)), rng.standard_normal((3, 1))
    model = lti_model(A, B)
    cost = CostSpec(np.eye(3), ONE, random_spd(rng, 3))
    P, K = dare(A, B, cost.Q, cost.R)
    J = pointwise_inf_cost(model, K[None], 0.5, cost)
    assert J == pytest.approx(np.trace(P @ cost.Sigma0), rel=1e-10)
    assert pointwise_riccati(model, [[0.5]], cost)[0] == pytest.approx(J, rel=1e-10)


def test_pointwise_cost_scalar_composite():
    # A + BK = 0.5, W = 1 + 0.25
    model = lti_model(ONE, ONE)
    assert pointwise_inf_cost(model, [[[-0.5]]], 0.3, UNIT) == pytest.approx(1.25 * 4 / 3, rel=1e-14)


def test_scalar_hat_integrated_cost_vs_trapezoid():
    model = scalar_hat(a0=0.5, a1=1.5)
    K = np.array([[[-0.3]], [[-1.0]]])
    J = integrated_inf_cost(model, K, gauss_legendre(model.domain, 30), UNIT)
    p = np.linspace(0, 1, 20001)
    a = 0.5 + p
    k = -0.3 * (1 - p) - 1.0 * p
    f = (1 + k ** 2) / (1 - (a + k) ** 2)
    assert J == pytest.approx(np.trapezoid(f, p), rel=1e-6)
    # refinement
    J2 = integrated_inf_cost(model, K, gauss_legendre(model.domain, 34), UNIT)
    assert J2 == pytest.approx(J, rel=1e-8)


def test_integrated_cost_unstable_node_named():
    model = scalar_hat()
    with pytest.raises(UnstableError, match="quadrature node"):
        integrated_inf_cost(model, np.zeros((2, 1, 1)), gauss_legendre(model.domain, 4), UNIT)


def test_riccati_bound_scalar_closed_form():
    model = scalar_hat()
    rule = gauss_legendre(model.domain, 6)
    J, per = riccati_lower_bound(model, rule, UNIT)
    a = 0.5 + rule.nodes[:, 0]
    # scalar DARE with b = q = r = 1: P^2 - a^2 P - 1 = 0
    ref = 0.5 * (a ** 2 + np.sqrt(a ** 4 + 4))
    np.testing.assert_allclose(per, ref, rtol=1e-12)
    assert J == pytest.approx(rule.weights @ ref, rel=1e-12)


def test_riccati_bound_unstabilizable_node_named():
    dom = ParameterDomain([0.0], [1.0])
    model = PolytopicModel(dom, hat_basis(dom, [2]), np.array([[[1.5]], [[0.5]]]), np.zeros((2, 1, 1)))
    with pytest.raises(UnstabilizableError, match="node 0"):
        riccati_lower_bound(model, gauss_legendre(dom, 3), UNIT)


def test_vertex_riccati_names_vertex():
    dom = ParameterDomain([0.0], [1.0])
    model = PolytopicModel(dom, hat_basis(dom, [2]), np.full((2, 1, 1), 1.5), np.array([[[1.0]], [[0.0]]]))
    with pytest.raises(UnstabilizableError, match="vertex 1"):
        vertex_riccati_gains(model, UNIT)


# --- spectral radius scans ---------------------------------------------------


def test_open_loop_unstable_corner():
    model = scalar_hat(a0=0.5, a1=1.5)
    rho, p = max_spectral_radius(model, np.zeros((2, 1, 1)), uniform_grid(model.domain, [11]))
    assert rho == pytest.approx(1.5) and p[0] == pytest.approx(1.0)


def test_single_vertex_radius_is_constant():
    rng = np.random.default_rng(0)
    A, B = stable_matrix(rng, 3), rng.standard_normal((3, 1))
    model = lti_model(A, B, d=2)
    K = np.zeros((1, 1, 3))
    rho, _ = max_spectral_radius(model, K, uniform_grid(model.domain, [5, 5]))
    assert rho == pytest.approx(spectral_radius(A), rel=1e-12)


def test_grid_refinement_never_decreases_radius():
    model = msd_qlpv(d=2)
    K = np.zeros((model.nv, 1, 2))
    r1, _ = max_spectral_radius(model, K, uniform_grid(model.domain, [5, 5]))
    r2, _ = max_spectral_radius(model, K, uniform_grid(model.domain, [9, 9]))
    assert r2 >= r1


def test_spectral_radius_complex_pair():
    R = np.array([[0.0, -0.9], [0.9, 0.0]])
    assert spectral_radius(R) == pytest.approx(0.9, abs=1e-12)


def test_uniform_grid_faces_and_counts():
    dom = ParameterDomain([0, -1, 2], [1, 1, 3])
    g = uniform_grid(dom, default_eval_counts(3))
    assert g.shape == (1280, 3)
    np.testing.assert_array_equal(g.min(axis=0), dom.lo)
    np.testing.assert_array_equal(g.max(axis=0), dom.hi)
    assert np.prod(default_eval_counts(1)) == np.prod(default_eval_counts(2)) == 1280


# --- fixed-point residuals ----------------------------------------------------


@pytest.mark.parametrize("seed", range(5))
def test_fixed_point_residual_at_dare_gain(seed):
    rng = np.random.default_rng(seed)
    A, B = rng.standard_normal((3, 3)), rng.standard_normal((3, 2))
    model = lti_model(A, B)
    cost = CostSpec(random_spd(rng, 3), random_spd(rng, 2), random_spd(rng, 3))
    _, K = dare(A, B, cost.Q, cost.R)
    res = fixed_point_residual(model, K[None], cost, gauss_legendre(model.domain, 2))
    assert res.stationarity <= 1e-8 and res.lyapunov <= 1e-8


def test_fixed_point_residual_first_order_in_perturbation(msd, msd_rule, msd_cost):
    K = rhpg_synthesize(msd, msd_cost, 300, msd_rule).gains
    base = fixed_point_residual(msd, K, msd_cost, msd_rule).stationarity
    D = np.random.default_rng(0).standard_normal(K.shape)
    r1 = fixed_point_residual(msd, K + 1e-4 * D, msd_cost, msd_rule).stationarity
    r2 = fixed_point_residual(msd, K + 2e-4 * D, msd_cost, msd_rule).stationarity
    assert base < 1e-8
    assert r2 / r1 == pytest.approx(2.0, rel=0.05)


# --- Lyapunov condition ---------------------------------------------------------


def test_lyapunov_condition_examples():
    model = lti_model(ONE, ONE)
    _, K = dare(ONE, ONE, ONE, ONE)
    grid = uniform_grid(model.domain, [3])
    assert not lyapunov_condition_check(np.zeros((1, 1)), model, K[None], grid, UNIT).passed
    chk = lyapunov_condition_check([[PHI]], model, K[None], grid, UNIT)
    assert chk.passed and abs(chk.margin) <= 1e-12


def test_lyapunov_condition_threshold_scalar_hat():
    # K_i = 0.5 - a_i pins A(p) + K(p) = 0.5, so the condition reads
    # 1 + K(p)^2 + 0.25 g <= g, i.e. g >= (1 + max K^2) / 0.75 = 8/3
    model = scalar_hat(a0=0.5, a1=1.5)
    K = np.array([[[0.0]], [[-1.0]]])
    grid = uniform_grid(model.domain, [21])
    np.testing.assert_allclose(closed_loop(model, K, grid), 0.5, atol=1e-15)
    assert lyapunov_condition_check([[8 / 3 + 1e-6]], model, K, grid, UNIT).passed
    chk = lyapunov_condition_check([[2.6]], model, K, grid, UNIT)
    assert not chk.passed and chk.worst_point[0] == pytest.approx(1.0)
    assert chk.margin == pytest.approx(1 + 1 + 0.25 * 2.6 - 2.6)


# --- simulation -----------------------------------------------------------------


def test_simulation_examples():
    model = lti_model(np.zeros((2, 2)), np.ones((2, 1)))
    tr = simulate_frozen(model, np.zeros((1, 1, 2)), 0.5, [1.0, -1.0], 4)
    np.testing.assert_array_equal(tr.x[1:], 0.0)
    model = lti_model([[0.5]], ONE)
    tr = simulate_frozen(model, np.zeros((1, 1, 1)), 0.5, [1.0], 10, cost=UNIT)
    np.testing.assert_allclose(tr.x[:, 0], 0.5 ** np.arange(11), rtol=1e-15)
    np.testing.assert_allclose(tr.stage_cost, 0.25 ** np.arange(10), rtol=1e-15)
    model = lti_model([[2.0]], ONE)
    tr = simulate_frozen(model, np.zeros((1, 1, 1)), 0.5, [1.0], 2000)
    assert not np.all(np.isfinite(tr.x)) or np.abs(tr.x[-1, 0]) > 1e100


def test_simulated_cost_sums_to_pointwise_cost():
    model = scalar_hat()
    K = np.array([[[-0.3]], [[-1.0]]])
    tr = simulate_frozen(model, K, 0.4, [1.0], 400, cost=UNIT)
    assert tr.stage_cost.sum() == pytest.approx(pointwise_inf_cost(model, K, 0.4, UNIT), rel=1e-12)


# --- report ---------------------------------------------------------------------


def test_eval_zero_gain_on_stable_open_loop():
    model = scalar_hat(a0=0.2, a1=0.6)
    rule = rule_for_model(model, 6)
    rep = evaluate_controller(model, np.zeros((2, 1, 1)), UNIT, rule, uniform_grid(model.domain, [101]))
    assert rep.stable and rep.gap >= 0
    assert rep.rho_max == pytest.approx(0.6)
    assert rep.worst_pointwise_gap == pytest.approx(np.nanmax(rep.pointwise["gap_p"]))


def test_eval_unstable_gain_reports_no_cost():
    model = scalar_hat()
    rep = evaluate_controller(model, np.zeros((2, 1, 1)), UNIT, rule_for_model(model), uniform_grid(model.domain, [11]))
    assert not rep.stable and rep.J_inf is None and rep.gap is None
    d = rep.to_dict()
    assert d["J_inf"] is None and d["rho_max"] == pytest.approx(1.5)


def test_eval_report_fields_rederivable_from_pointwise(msd, msd_cost, msd_rule):
    K = rhpg_synthesize(msd, msd_cost, 200, msd_rule).gains
    rep = evaluate_controller(msd, K, msd_cost, msd_rule, uniform_grid(msd.domain, [12, 10]))
    pw = rep.pointwise
    assert rep.rho_max == np.max(pw["rho"])
    np.testing.assert_array_equal(rep.rho_argmax, pw["points"][np.argmax(pw["rho"])])
    assert rep.worst_pointwise_gap == np.max((pw["J_inf_p"] - pw["J_ric_p"]) / pw["J_ric_p"])
    assert np.all(pw["J_inf_p"] >= pw["J_ric_p"] * (1 - 1e-9))
