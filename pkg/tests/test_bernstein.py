import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from math import comb
from scipy.integrate import quad

from geobern.bernstein import (
    SegmentGrid,
    ThetaVector,
    basis_eval,
    composite_integration_matrix,
    continuity_block,
    evaluate_level,
    integrate_control_points,
    knot_matrix,
    knot_matrix_from_zeta,
    knots_of_derivative,
    sample_trajectory,
    segment_integration_matrix,
    straight_line_theta,
    theta_expand,
)


def direct_eval(cps_1d, grid, t):
    """Binomial-sum evaluation of a scalar composite polynomial (oracle)."""
    K = grid.K
    N = len(cps_1d) // K - 1
    kt = grid.knot_times
    k = min(max(np.searchsorted(kt, t, side="left") - 1, 0), K - 1)
    a, b = kt[k], kt[k + 1]
    seg = cps_1d[k * (N + 1):(k + 1) * (N + 1)]
    return sum(seg[j] * comb(N, j) * (t - a) ** j * (b - t) ** (N - j) / (b - a) ** N for j in range(N + 1))


def random_grid(rng, K):
    widths = rng.uniform(0.2, 1.5, K)
    return SegmentGrid(np.concatenate([[rng.uniform(-1, 1)], widths]).cumsum())


# -- basis ---------------------------------------------------------------

def test_basis_endpoints():
    assert basis_eval(0, 3, 0.0, (0.0, 1.0)) == 1.0
    assert basis_eval(3, 3, 1.0, (0.0, 1.0)) == 1.0
    assert basis_eval(3, 3, 2.5, (-1.0, 2.5)) == 1.0


def test_basis_partition_example():
    t0, tf = 0.3, 2.1
    t = 0.37 * (tf - t0) + t0
    assert abs(sum(basis_eval(j, 5, t, (t0, tf)) for j in range(6)) - 1.0) < 1e-12


@pytest.mark.parametrize("j,N,t", [(-1, 3, 0.5), (4, 3, 0.5), (0, 3, 1.5), (0, 3, -0.1)])
def test_basis_domain_errors(j, N, t):
    with pytest.raises(ValueError):
        basis_eval(j, N, t, (0.0, 1.0))


@settings(max_examples=100, deadline=None)
@given(N=st.integers(0, 10), u=st.floats(0.0, 1.0), t0=st.floats(-5, 5), w=st.floats(0.1, 10))
def test_partition_of_unity(N, u, t0, w):
    t = t0 + u * w
    t = min(max(t, t0), t0 + w)
    total = sum(basis_eval(j, N, t, (t0, t0 + w)) for j in range(N + 1))
    assert abs(total - 1.0) < 1e-12


# -- integration matrices -------------------------------------------------

def test_segment_integration_examples():
    np.testing.assert_array_equal(segment_integration_matrix(0, 0.0, 2.0), [[0.0, 2.0]])
    np.testing.assert_array_equal(
        segment_integration_matrix(1, 0.0, 1.0), [[0.0, 0.5, 0.5], [0.0, 0.0, 0.5]]
    )


def test_continuity_examples():
    np.testing.assert_array_equal(continuity_block(0, 0.0, 2.0), [[2.0, 2.0]])
    np.testing.assert_array_equal(continuity_block(1, 0.0, 1.0), np.full((2, 3), 0.5))
    np.testing.assert_allclose(continuity_block(3, 0.0, 2.0), 2 * continuity_block(3, 0.0, 1.0))


@pytest.mark.parametrize("fn", [segment_integration_matrix, continuity_block])
@pytest.mark.parametrize("t_prev,t_next", [(1.0, 1.0), (2.0, 1.0)])
def test_degenerate_interval_rejected(fn, t_prev, t_next):
    with pytest.raises(ValueError):
        fn(2, t_prev, t_next)


def test_composite_matrix_example():
    G = composite_integration_matrix(SegmentGrid([0.0, 1.0, 2.0]), 0)
    np.testing.assert_array_equal(G, [[0, 1, 1, 1], [0, 0, 0, 1]])


def test_composite_single_block():
    grid = SegmentGrid([0.5, 1.75])
    np.testing.assert_array_equal(
        composite_integration_matrix(grid, 3), segment_integration_matrix(3, 0.5, 1.75)
    )


def test_grid_validation():
    with pytest.raises(ValueError):
        SegmentGrid([0.0, 1.0, 1.0])
    with pytest.raises(ValueError):
        SegmentGrid([0.0])
    with pytest.raises(ValueError):
        SegmentGrid.uniform(0.0, 1.0, 0)
    g = SegmentGrid.uniform(0.0, 3.0, 3)
    np.testing.assert_array_equal(g.knot_times, [0, 1, 2, 3])


# -- integrate_control_points ---------------------------------------------

def test_integrate_ramp():
    grid = SegmentGrid([0.0, 1.0, 2.0])
    np.testing.assert_array_equal(integrate_control_points([1.0, 1.0], grid, 0.0), [0, 1, 1, 2])


def test_integrate_zero_constant():
    grid = SegmentGrid.uniform(0, 3, 3)
    out = integrate_control_points(np.zeros(6), grid, 5.0)
    np.testing.assert_array_equal(out, np.full(9, 5.0))


def test_integrate_linear_gives_square():
    # 2t on [0, 1] has Bernstein control points [0, 2]
    grid = SegmentGrid([0.0, 1.0])
    out = integrate_control_points([0.0, 2.0], grid, 0.0)
    np.testing.assert_allclose(out, [0.0, 0.0, 1.0])
    for t in (0.0, 0.3, 1.0):
        assert abs(direct_eval(out, grid, t) - t**2) < 1e-15


def test_integrate_shape_errors():
    grid = SegmentGrid.uniform(0, 1, 2)
    with pytest.raises(ValueError):
        integrate_control_points(np.zeros(3), grid, 0.0)
    with pytest.raises(ValueError):
        integrate_control_points(np.zeros((4, 2)), grid, np.zeros(3))


@pytest.mark.parametrize("seed", range(20))
def test_integration_matches_quadrature(seed):
    rng = np.random.default_rng(seed)
    K, N = rng.integers(1, 6), rng.integers(0, 7)
    grid = random_grid(rng, K)
    cps = rng.normal(size=K * (N + 1))
    c = rng.normal()
    out = integrate_control_points(cps, grid, c)
    for t in rng.uniform(grid.t0, grid.tf, 20):
        # integrate piecewise so quad never straddles a kink
        pts = [p for p in grid.knot_times if p < t] + [t]
        ref = c + sum(
            quad(lambda s: direct_eval(cps, grid, s), a, b, epsabs=1e-13, epsrel=1e-13)[0]
            for a, b in zip(pts[:-1], pts[1:])
        )
        assert abs(direct_eval(out, grid, t) - ref) < 1e-9


# -- theta expansion ------------------------------------------------------

def random_theta(rng, K=None, M=None, D=None):
    K = K or int(rng.integers(1, 8))
    M = M or int(rng.integers(1, 5))
    D = D or int(rng.integers(1, 4))
    grid = random_grid(rng, K)
    return ThetaVector(rng.normal(size=(K, D)), rng.normal(size=(M, D)), grid)


def test_theta_dimension():
    rng = np.random.default_rng(0)
    for _ in range(10):
        th = random_theta(rng)
        assert th.as_array().size == th.D * (th.K + th.M)
        back = ThetaVector.from_array(th.as_array(), th.grid, th.M, th.D)
        np.testing.assert_array_equal(back.derivative_cps, th.derivative_cps)
        np.testing.assert_array_equal(back.constants, th.constants)


def test_expand_constant_position():
    grid = SegmentGrid.uniform(0, 2, 4)
    th = ThetaVector(np.zeros((4, 2)), [[3.0, -1.0]], grid)
    stack = theta_expand(th)
    np.testing.assert_array_equal(stack.levels[0], np.tile([3.0, -1.0], (8, 1)))


def test_expand_level_orders():
    rng = np.random.default_rng(1)
    th = random_theta(rng, K=5, M=3, D=2)
    stack = theta_expand(th)
    for m in range(4):
        assert stack.levels[m].shape == (5 * (3 - m + 1), 2)


@pytest.mark.parametrize("seed", range(10))
def test_knot_continuity_exact(seed):
    th = random_theta(np.random.default_rng(seed), M=4)
    stack = theta_expand(th)
    for m in range(th.M):
        seg = stack.segments(m)
        np.testing.assert_array_equal(seg[:-1, -1], seg[1:, 0])


@pytest.mark.parametrize("seed", range(10))
def test_derivative_finite_difference(seed):
    rng = np.random.default_rng(seed)
    th = random_theta(rng, M=3)
    stack = theta_expand(th)
    h = 1e-4 * (th.grid.tf - th.grid.t0)
    kt = th.grid.knot_times
    # interior points away from knots so each stencil stays on one segment
    mids = 0.5 * (kt[:-1] + kt[1:])
    for m in range(1, th.M + 1):
        fd = (evaluate_level(stack, m - 1, mids + h) - evaluate_level(stack, m - 1, mids - h)) / (2 * h)
        np.testing.assert_allclose(fd, evaluate_level(stack, m, mids), atol=1e-6, rtol=0)


def test_knots_of_derivative_range():
    th = random_theta(np.random.default_rng(2), M=3)
    with pytest.raises(ValueError):
        knots_of_derivative(th, 4)
    with pytest.raises(ValueError):
        knots_of_derivative(th, -1)


def test_top_level_knots_left_limit():
    grid = SegmentGrid.uniform(0, 3, 3)
    th = ThetaVector([[1.0], [2.0], [3.0]], [[0.0], [0.0]], grid)
    np.testing.assert_array_equal(knots_of_derivative(th, 2).ravel(), [1, 1, 2, 3])


@pytest.mark.parametrize("seed", range(5))
def test_knot_matrix_matches_direct(seed):
    th = random_theta(np.random.default_rng(seed), D=2)
    for m in range(th.M + 1):
        T = knot_matrix(th.grid, th.M, m)
        assert T.shape == (th.K + th.M, th.K + 1)
        for d in range(th.D):
            theta_1d = np.concatenate([th.derivative_cps[:, d], th.constants[:, d]])
            np.testing.assert_allclose(theta_1d @ T, knots_of_derivative(th, m)[:, d], atol=1e-12)


@pytest.mark.parametrize("seed", range(5))
def test_zeta_chain_equivalence(seed):
    th = random_theta(np.random.default_rng(seed))
    for m in range(th.M + 1):
        np.testing.assert_allclose(
            knot_matrix_from_zeta(th.grid, th.M, m), knot_matrix(th.grid, th.M, m), atol=1e-12
        )


def test_evaluation_matches_binomial_sum():
    rng = np.random.default_rng(3)
    th = random_theta(rng, K=4, M=6, D=1)
    stack = theta_expand(th)
    ts = rng.uniform(th.grid.t0, th.grid.tf, 50)
    got = evaluate_level(stack, 0, ts)[:, 0]
    ref = [direct_eval(stack.levels[0][:, 0], th.grid, t) for t in ts]
    np.testing.assert_allclose(got, ref, rtol=1e-12, atol=1e-12)


# -- straight line and sampling -------------------------------------------

def test_straight_line_example():
    grid = SegmentGrid.uniform(0, 2, 4)
    th = straight_line_theta([0, 0], [2, 0], grid, 3)
    np.testing.assert_array_equal(th.derivative_cps, 0)
    np.testing.assert_array_equal(th.constants[1], [1, 0])
    np.testing.assert_allclose(knots_of_derivative(th, 0)[:, 0], [0, 0.5, 1, 1.5, 2])
    np.testing.assert_allclose(knots_of_derivative(th, 1), np.tile([1.0, 0.0], (5, 1)))
    np.testing.assert_array_equal(knots_of_derivative(th, 2), 0)


def test_straight_line_degenerate():
    grid = SegmentGrid.uniform(0, 1, 3)
    tr = sample_trajectory(straight_line_theta([1, 2], [1, 2], grid, 3), 7)
    np.testing.assert_array_equal(tr.positions, np.tile([1.0, 2.0], (7, 1)))


@pytest.mark.parametrize("M", [1, 2, 3, 4])
def test_straight_line_endpoints(M):
    grid = SegmentGrid.uniform(0, 3.7, 6)
    p0, pf = np.array([-1.2, 0.4, 2.0]), np.array([2.5, -3.0, 1.0])
    tr = sample_trajectory(straight_line_theta(p0, pf, grid, M), 2)
    np.testing.assert_allclose(tr.positions[0], p0, atol=1e-12)
    np.testing.assert_allclose(tr.positions[-1], pf, atol=1e-12)


def test_sampling_at_knots_matches_knot_values():
    rng = np.random.default_rng(4)
    th = random_theta(rng, K=5, M=3, D=2)
    grid = th.grid
    # uniform grid so that uniform samples land on knots
    th = ThetaVector(th.derivative_cps, th.constants, SegmentGrid.uniform(0, 5, 5))
    tr = sample_trajectory(th, 11)
    on_knots = slice(None, None, 2)
    np.testing.assert_allclose(tr.positions[on_knots], knots_of_derivative(th, 0), atol=1e-12)
    np.testing.assert_allclose(tr.velocities[on_knots], knots_of_derivative(th, 1), atol=1e-12)
    np.testing.assert_allclose(tr.accelerations[on_knots], knots_of_derivative(th, 2), atol=1e-12)
    np.testing.assert_allclose(tr.knot_positions, knots_of_derivative(th, 0), atol=1e-12)
    assert grid.K == 5


def test_sample_count_validation():
    th = straight_line_theta([0, 0], [1, 1], SegmentGrid.uniform(0, 1, 2), 3)
    with pytest.raises(ValueError):
        sample_trajectory(th, 1)
