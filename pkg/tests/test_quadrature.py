import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from prhpg.benchmarks import msd_qlpv, scalar_hat
from prhpg.model import ParameterDomain, gram_matrix, hat_basis, PolytopicModel
from prhpg.quadrature import gauss_legendre, integrate, legendre_nodes, rule_for_model


def test_one_point_rule_is_midpoint():
    rule = gauss_legendre(ParameterDomain([0.0], [1.0]), 1)
    np.testing.assert_allclose(rule.nodes, [[0.5]], atol=1e-15)
    np.testing.assert_allclose(rule.weights, [1.0], atol=1e-15)


def test_two_point_rule_on_symmetric_interval():
    rule = gauss_legendre(ParameterDomain([-1.0], [1.0]), 2)
    np.testing.assert_allclose(np.sort(rule.nodes[:, 0]), [-1 / np.sqrt(3), 1 / np.sqrt(3)], atol=1e-15)
    np.testing.assert_allclose(rule.weights, [0.5, 0.5], atol=1e-15)


def test_432_node_rule_on_three_dimensions():
    rule = gauss_legendre(ParameterDomain([0, 0, 0], [1, 1, 1]), [6, 8, 9])
    assert len(rule) == 432
    assert abs(rule.weights.sum() - 1.0) < 1e-12


@pytest.mark.parametrize("order", [1, 2, 3, 5, 8, 12, 20, 40])
def test_nodes_match_numpy_leggauss(order):
    x, w = legendre_nodes(order)
    xr, wr = np.polynomial.legendre.leggauss(order)
    np.testing.assert_allclose(x, xr, atol=1e-14)
    np.testing.assert_allclose(w, wr, atol=1e-14)


def test_identity_integrand_gives_identity():
    rule = gauss_legendre(ParameterDomain([0.0, -1.0], [2.0, 3.0]), [3, 4])
    out = integrate(rule, np.broadcast_to(np.eye(3), (len(rule), 3, 3)))
    np.testing.assert_allclose(out, np.eye(3), atol=1e-14)


def test_linear_and_quadratic_integrands():
    dom = ParameterDomain([0.0], [1.0])
    r1 = gauss_legendre(dom, 1)
    assert abs(integrate(r1, lambda k: [[r1.nodes[k, 0]]])[0, 0] - 0.5) < 1e-14
    r2 = gauss_legendre(dom, 2)
    assert abs(integrate(r2, lambda k: [[r2.nodes[k, 0] ** 2]])[0, 0] - 1 / 3) < 1e-14


def test_integrate_rejects_shape_mismatch():
    rule = gauss_legendre(ParameterDomain([0.0], [1.0]), 3)
    with pytest.raises(ValueError):
        integrate(rule, lambda k: np.zeros(k + 1))
    with pytest.raises(ValueError):
        integrate(rule, np.zeros(5))


def test_orders_must_be_positive():
    with pytest.raises(ValueError):
        gauss_legendre(ParameterDomain([0.0], [1.0]), 0)


@settings(max_examples=30, deadline=None)
@given(order=st.integers(1, 8), degs=st.lists(st.integers(0, 15), min_size=1, max_size=3),
       lo=st.floats(-2, 1), width=st.floats(0.1, 3))
def test_polynomial_exactness(order, degs, lo, width):
    degs = [min(k, 2 * order - 1) for k in degs]
    d = len(degs)
    dom = ParameterDomain([lo] * d, [lo + width] * d)
    rule = gauss_legendre(dom, order)
    vals = np.prod(rule.nodes ** np.array(degs), axis=1)
    hi = lo + width
    exact = np.prod([(hi ** (k + 1) - lo ** (k + 1)) / ((k + 1) * width) for k in degs])
    assert abs(integrate(rule, vals) - exact) <= 1e-13 * max(1.0, abs(exact)) * 10


@settings(max_examples=20, deadline=None)
@given(orders=st.lists(st.integers(1, 6), min_size=1, max_size=3))
def test_rule_invariants(orders):
    d = len(orders)
    dom = ParameterDomain(np.zeros(d), np.arange(1, d + 1, dtype=float))
    rule = gauss_legendre(dom, orders)
    assert len(rule) == int(np.prod(orders))
    assert abs(rule.weights.sum() - 1) < 1e-12
    assert np.all(rule.weights > 0)
    assert np.all(rule.nodes > dom.lo) and np.all(rule.nodes < dom.hi)


def test_last_dimension_fastest():
    rule = gauss_legendre(ParameterDomain([0, 0], [1, 1]), [2, 3])
    assert np.all(rule.nodes[:3, 0] == rule.nodes[0, 0])
    assert len(set(rule.nodes[:3, 1])) == 3


def test_density_hook_reweights():
    dom = ParameterDomain([0.0], [1.0])
    rule = gauss_legendre(dom, 4, density=lambda x: 2 * x[:, 0])
    # mean of p under density 2p on [0,1] is 2/3
    assert abs(integrate(rule, rule.nodes[:, 0]) - 2 / 3) < 1e-14


@pytest.mark.parametrize("knots", [2, 3, 5])
def test_hat_gram_refinement_stability(knots):
    dom = ParameterDomain([0.0, 0.0], [1.0, 2.0])
    model = PolytopicModel(dom, hat_basis(dom, [knots, 3]),
                           np.zeros((knots * 3, 1, 1)), np.ones((knots * 3, 1, 1)))
    for q in (2, 3, 4):
        g1 = gram_matrix(model, rule_for_model(model, q))
        g2 = gram_matrix(model, rule_for_model(model, q + 2))
        assert np.max(np.abs(g1 - g2)) < 1e-8


def test_composite_rule_exact_for_interior_knots():
    model = msd_qlpv(d=1, knots=3)
    rule = rule_for_model(model)
    g = gram_matrix(model, rule)
    # hats on [0,1/2,1] rescaled: Gram entries in units of the domain length
    expected = np.array([[1 / 6, 1 / 12, 0], [1 / 12, 1 / 3, 1 / 12], [0, 1 / 12, 1 / 6]])
    np.testing.assert_allclose(g, expected, atol=1e-14)


def test_scalar_hat_default_rule_has_two_nodes():
    assert len(rule_for_model(scalar_hat())) == 2


def _interpolated_model():
    from prhpg.model import tp_transform

    dom = ParameterDomain([0.0, 0.0], [2.0, 1.0])
    return tp_transform(lambda p: (np.array([[p[0] + p[1] ** 2]]), np.array([[1 + p[0] * p[1]]])), dom, [6, 5]).model


def test_interpolated_basis_composite_rule_is_exact():
    model = _interpolated_model()
    g2 = gram_matrix(model, rule_for_model(model, 2))
    g5 = gram_matrix(model, rule_for_model(model, 5))
    assert np.max(np.abs(g2 - g5)) < 1e-14


def test_global_rule_drift_check_warns_on_kinked_factors():
    model = _interpolated_model()
    with pytest.warns(RuntimeWarning, match="drift"):
        rule = rule_for_model(model, composite=False)
    assert len(rule) == 64
