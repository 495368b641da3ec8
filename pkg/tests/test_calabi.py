import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from groupoidlab.calabi import (CoefficientMatrix, GammaSolver, PotentialGauge, calabi_general,
                                check_gamma_idempotence, check_generating_function, check_one_one,
                                critical_point_report, cyclic_calabi, gamma_jacobian_fd, membership_residual,
                                omega_mixed, potential, scaled_t, t_function, t_terms)
from groupoidlab.errors import DomainEscape, InvalidCoefficients
from groupoidlab.fields import gallery
from groupoidlab.groupoid import GroupoidContext
from groupoidlab.numerics import cross_hessian
from groupoidlab.sampling import centered_samples

from conftest import GRAPH_M1, GRAPH_M2, MIXED_M1

small = st.floats(-0.5, 0.5)
vec2 = arrays(float, 2, elements=small)


@pytest.fixture(scope="module")
def std():
    pair = gallery("standard", [], 1, box_radius=2.0)
    return GammaSolver(pair), PotentialGauge.at_center(pair), GroupoidContext(pair)


@pytest.fixture(scope="module")
def g1():
    pair = gallery("graph", GRAPH_M1, 1)
    return GammaSolver(pair), PotentialGauge.at_center(pair), GroupoidContext(pair)


@pytest.fixture(scope="module")
def g2():
    pair = gallery("graph", GRAPH_M2, 2)
    return GammaSolver(pair), PotentialGauge.at_center(pair), GroupoidContext(pair)


@pytest.fixture(scope="module")
def mx():
    pair = gallery("mixed", MIXED_M1, 1, box_radius=6.0)
    return GammaSolver(pair), PotentialGauge.at_center(pair)


def std_phi(x, y):
    return x[..., 0] * y[..., 1]


# -- gamma ---------------------------------------------------------------

@given(vec2, vec2)
def test_standard_gamma(std, x, y):
    np.testing.assert_allclose(std[0](x, y), [x[0], y[1]], atol=1e-13)


def test_mixed_gamma_example(mx):
    np.testing.assert_allclose(mx[0](np.array([1.0, 0.0]), np.array([2.0, 5.0])), [2.0, 0.9], atol=1e-12)


def test_gamma_diagonal_and_idempotence(g2):
    gs = g2[0]
    x = centered_samples(1, "x", 30, 4, 0.5)
    y = x + centered_samples(1, "d", 30, 4, 0.1)
    assert np.max(np.abs(gs(x, x) - x)) <= 1e-12
    assert max(np.max(r) for r in check_gamma_idempotence(gs, x, y)) <= 1e-10
    assert np.max(membership_residual(gs, x, y)) <= 1e-8


def test_gamma_derivatives_match_direct_differencing(g1, g2):
    for gs in (g1[0], g2[0]):
        d = 2 * gs.m
        x = centered_samples(2, "x", 10, d, 0.5)
        y = x + centered_samples(2, "d", 10, d, 0.1)
        _, Jx, Jy = gs.derivatives(x, y)
        Fx, Fy = gamma_jacobian_fd(gs, x, y)
        assert np.max(np.abs(Jx - Fx)) <= 1e-7
        assert np.max(np.abs(Jy - Fy)) <= 1e-7


def test_gamma_domain_escape(std):
    with pytest.raises(DomainEscape):
        std[0](np.array([3.0, 0.0]), np.zeros(2))


# -- Omega and the potential -----------------------------------------------

def test_mixed_omega_matches_symbolic_potential(mx):
    # Phi = (0.3 q_x^2 - p_x) q_y, so d_x d_y Phi = [[0.6 q_x, 0], [-1, 0]].
    gs = mx[0]
    np.testing.assert_allclose(omega_mixed(gs, np.array([1.0, 0.0]), np.array([2.0, 5.0])),
                               [[0.6, 0.0], [-1.0, 0.0]], atol=1e-9)
    x = centered_samples(3, "x", 20, 2, 1.0)
    y = x + centered_samples(3, "d", 20, 2, 0.3)
    expected = np.zeros((20, 2, 2))
    expected[:, 0, 0] = 0.6 * x[:, 0]
    expected[:, 1, 0] = -1.0
    assert np.max(np.abs(omega_mixed(gs, x, y) - expected)) <= 1e-8


def test_mixed_potential_closed_form(mx):
    gs, gauge = mx
    x = centered_samples(4, "x", 20, 2, 1.0)
    y = x + centered_samples(4, "d", 20, 2, 0.3)
    expected = (0.3 * x[:, 0] ** 2 - x[:, 1]) * y[:, 0]
    assert np.max(np.abs(potential(gs, gauge, x, y) - expected)) <= 1e-9


@given(vec2, vec2)
def test_standard_potential(std, x, y):
    gs, gauge, _ = std
    assert abs(potential(gs, gauge, x, y) - std_phi(x, y)) <= 1e-12


def test_potential_normalization(g2):
    gs, gauge, _ = g2
    x = centered_samples(5, "x", 10, 4, 0.5)
    x0 = np.broadcast_to(gauge.base, x.shape)
    assert np.max(np.abs(potential(gs, gauge, x, x0))) <= 1e-14
    assert np.max(np.abs(potential(gs, gauge, x0, x))) <= 1e-14


def test_one_one_and_diagonal_reconstruction(g1, g2):
    for gs in (g1[0], g2[0]):
        d = 2 * gs.m
        x = centered_samples(6, "x", 20, d, 0.5)
        y = x + centered_samples(6, "d", 20, d, 0.1)
        assert np.max(check_one_one(gs, x, y)) <= 1e-7
        O = omega_mixed(gs, x, x)
        assert np.max(np.abs(O - np.swapaxes(O, -1, -2) - gs.pair.chart.omega(x))) <= 1e-7


def test_midpoint_map_is_not_one_one(g1):
    # The midpoint map does not lie on the leaves; its pure blocks are of order one.
    gs = g1[0]
    x = np.array([0.1, 0.2])
    y = np.array([0.15, 0.25])
    assert check_one_one(gs, x, y, gamma_map=lambda a, b: 0.5 * (a + b)) >= 0.1


def test_potential_mixed_derivative(g2):
    gs, gauge, _ = g2
    x = centered_samples(7, "x", 5, 4, 0.5)
    y = x + centered_samples(7, "d", 5, 4, 0.1)
    dd = cross_hessian(lambda a, b: potential(gs, gauge, a, b), x, y, gs.tol.hess_step)
    assert np.max(np.abs(dd - omega_mixed(gs, x, y))) <= 1e-6


# -- Calabi functions ------------------------------------------------------

def test_coefficient_matrix_validation():
    with pytest.raises(InvalidCoefficients):
        CoefficientMatrix([[1.0, 0.0], [0.0, -1.0]])
    with pytest.raises(InvalidCoefficients):
        CoefficientMatrix(np.zeros((0, 0)))
    np.testing.assert_array_equal(CoefficientMatrix.cyclic(3).entries,
                                  [[-1, 1, 0], [0, -1, 1], [1, 0, -1]])


def test_general_calabi_standard_example(std):
    gs, gauge, _ = std
    C = [[1.0, -1.0], [-1.0, 1.0]]
    xs = np.array([[1.0, 0.0], [0.0, 0.0]])
    ys = np.array([[0.0, -1.0], [0.0, 1.0]])
    # sum C_ij q_i p_j = 1*(-1) - 1*1 = -2
    assert calabi_general(gs, gauge, C, xs, ys) == pytest.approx(-2.0, abs=1e-12)


@given(vec2, vec2, vec2)
def test_standard_cyclic_closed_forms(std, a, b, c):
    gs, gauge, _ = std
    c2 = cyclic_calabi(gs, gauge, np.stack([a, b]))
    assert abs(c2 + (a[0] - b[0]) * (a[1] - b[1])) <= 1e-12
    pts = np.stack([a, b, c])
    nxt = np.roll(pts, -1, axis=0)
    expected = np.sum(pts[:, 0] * nxt[:, 1] - nxt[:, 0] * nxt[:, 1])
    assert abs(cyclic_calabi(gs, gauge, pts) - expected) <= 1e-12


@given(vec2, vec2, vec2)
def test_standard_t_closed_form(std, x, u, y):
    gs, gauge, _ = std
    assert abs(t_function(gs, gauge, x, u, y) - (x[0] - u[0]) * (u[1] - y[1])) <= 1e-12


def test_scaled_t():
    assert scaled_t(np.array([1.0, -1.0, 2.0, -2.0])) == 0.0
    assert scaled_t(np.array([0.1, 0.0, 0.0, 0.0])) == pytest.approx(0.1)
    assert scaled_t(np.array([10.0, 0.0, 0.0, 0.0])) == pytest.approx(1.0)


def test_gauge_invariance_and_degenerate_vanishing(g2):
    gs, gauge, _ = g2
    other = PotentialGauge(gauge.base + np.array([0.3, -0.2, 0.3, -0.2]))
    x = centered_samples(8, "x", 10, 4, 0.5)
    u = x + centered_samples(8, "u", 10, 4, 0.1)
    y = x + centered_samples(8, "y", 10, 4, 0.1)
    assert np.max(np.abs(t_function(gs, gauge, x, u, y) - t_function(gs, other, x, u, y))) <= 1e-8
    assert np.max(np.abs(t_function(gs, gauge, x, x, y))) <= 1e-10
    assert np.max(np.abs(t_function(gs, gauge, x, u, u))) <= 1e-10
    xs = np.stack([x, u, y], axis=1)
    assert np.max(np.abs(cyclic_calabi(gs, gauge, xs) - cyclic_calabi(gs, other, xs))) <= 1e-8
    same = np.stack([x, x, x], axis=1)
    assert np.max(np.abs(cyclic_calabi(gs, gauge, same))) <= 1e-10
    C = CoefficientMatrix([[1.0, -2.0, 1.0], [-1.0, 1.0, 0.0], [0.0, 1.0, -1.0]])
    assert np.max(np.abs(calabi_general(gs, gauge, C, xs, xs[:, ::-1])
                         - calabi_general(gs, other, C, xs, xs[:, ::-1]))) <= 1e-8


# -- generating function -------------------------------------------------

def test_generating_standard_hand_gradients(std):
    gs, gauge, G = std
    xs = np.array([[0.1, 0.2], [0.3, -0.1], [-0.2, 0.05]])
    nxt, prev = np.roll(xs, -1, axis=0), np.roll(xs, 1, axis=0)
    expected = np.stack([nxt[:, 1] - xs[:, 1], prev[:, 0] - xs[:, 0]], axis=1)
    report = check_generating_function(gs, gauge, G, xs)
    assert np.max(np.abs(report.xi - expected)) <= 1e-9
    assert report.passed(1e-9)
    assert report.failure is None


def test_generating_graph(g1):
    gs, gauge, G = g1
    centre = centered_samples(9, "c", 3, 2, 0.5)
    for n in (2, 4):
        xs = centre[:, None, :] + centered_samples(9, f"n{n}", 3 * n, 2, 0.1).reshape(3, n, 2)
        report = check_generating_function(gs, gauge, G, xs)
        assert report.passed(1e-6), report.checks(1e-6)


def test_generating_all_equal_points(g1):
    gs, gauge, G = g1
    xs = np.tile([0.1, -0.2], (3, 1))
    report = check_generating_function(gs, gauge, G, xs)
    assert np.max(np.abs(report.xi)) <= 1e-9
    assert report.passed(1e-6)


def test_generating_rejects_single_point(g1):
    with pytest.raises(ValueError):
        check_generating_function(g1[0], g1[1], g1[2], np.zeros((1, 2)))


# -- critical point --------------------------------------------------------

def test_standard_critical_report(std):
    gs, gauge, _ = std
    r = critical_point_report(gs, gauge, np.array([0.2, 0.1]), np.array([-0.1, 0.3]))
    np.testing.assert_allclose(r.gamma_point, [0.2, 0.3], atol=1e-13)
    np.testing.assert_allclose(r.hessian, [[0.0, -1.0], [-1.0, 0.0]], atol=1e-9)
    np.testing.assert_allclose(r.A, [[1.0, 0.0], [0.0, 0.0]], atol=1e-10)
    np.testing.assert_allclose(r.B, [[0.0, 0.0], [0.0, 1.0]], atol=1e-10)
    assert r.nondegenerate and r.ranks == (1, 1)
    assert abs(r.t_value) <= 1e-12 and r.grad_norm <= 1e-9


@pytest.mark.parametrize("which", ["g1", "g2"])
def test_graph_critical_reports(which, request):
    gs, gauge, _ = request.getfixturevalue(which)
    d = 2 * gs.m
    x = centered_samples(10, "x", 1, d, 0.5)[0]
    for y in (x, x + centered_samples(10, "d", 1, d, 0.1)[0]):
        r = critical_point_report(gs, gauge, x, y)
        assert r.t_scaled <= 1e-8
        assert r.grad_norm <= 1e-6
        assert r.nondegenerate
        assert r.ranks == (gs.m, gs.m)
        res = r.identity_residuals
        for key in ("A_plus_B_minus_I", "A_squared_minus_A", "B_squared_minus_B", "AB", "BA",
                    "B_minus_Cinv_At_C", "rank_A", "rank_B"):
            assert res[key] <= 1e-8, key
        assert res["hessian_minus_C_A_minus_B"] <= 1e-6
        assert res["At_C_B_minus_dd_phi"] <= 1e-6


def test_t_terms_stack(g1):
    gs, gauge, _ = g1
    x, u, y = np.array([0.1, 0.0]), np.array([0.12, 0.03]), np.array([0.05, 0.1])
    terms = t_terms(gs, gauge, x, u, y)
    assert terms.shape == (4,)
    assert terms.sum() == pytest.approx(t_function(gs, gauge, x, u, y), abs=1e-15)


def test_gamma_leaving_the_chart_is_reported():
    from groupoidlab.errors import OutOfNeighborhood
    gs = GammaSolver(gallery("graph", [0.0, 3.0, 0.0, 3.0], 1, box_radius=2.0, fiber_radius=0.5))
    with pytest.raises(OutOfNeighborhood):
        gs(np.array([-1.9, -1.9]), np.array([1.9, 1.9]))


def test_standard_omega_single_entry(std):
    O = omega_mixed(std[0], np.array([0.3, -0.4]), np.array([0.1, 0.2]))
    np.testing.assert_allclose(O, [[0.0, 1.0], [0.0, 0.0]], atol=1e-12)


@pytest.mark.parametrize("name,params,m,radius", [("standard", [], 1, 1.0), ("graph", GRAPH_M1, 1, 1.0),
                                                  ("graph", GRAPH_M2, 2, 1.0), ("mixed", MIXED_M1, 1, 6.0)])
def test_one_one_on_hundred_pairs(name, params, m, radius):
    gs = GammaSolver(gallery(name, params, m, box_radius=radius))
    x = centered_samples(12, "x", 100, 2 * m, 0.5 * radius)
    y = x + centered_samples(12, "d", 100, 2 * m, 0.1 * radius)
    assert np.max(check_one_one(gs, x, y)) <= 1e-6
    if name == "mixed":
        assert np.max(check_one_one(gs, x[:20], y[:20])) <= 1e-7


def test_swapped_arguments_stay_one_one(g1):
    # Swapping the roles of x and y only exchanges the two pure blocks, so this
    # corruption cannot be detected by the (1,1) test.
    gs = g1[0]
    x = np.array([0.1, 0.2])
    y = np.array([0.15, 0.25])
    assert check_one_one(gs, x, y, gamma_map=lambda a, b: gs(b, a)) <= 1e-7
