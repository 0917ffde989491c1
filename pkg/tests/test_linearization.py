import itertools

import numpy as np
import pytest

from cta_lab.forward import build_operator, grid_field, smallness_radius, solve_linear_dirichlet
from cta_lab.linearization import (
    EpsFamily,
    SolverContext,
    build_hierarchy,
    direct_fourth_linearized,
    direct_second_linearized,
    direct_third_linearized,
    identity_family,
    identity_residual,
    mixed_derivative,
    random_modes,
    smooth_boundary_data,
)

Q = "1 + 0.5*x1*y1"


@pytest.fixture(scope="module")
def setup():
    op = build_operator(n=14, V=1.0)
    fam = EpsFamily([smooth_boundary_data(op, s) for s in range(3)])
    radius = smallness_radius(op, grid_field(op, Q))
    hier = build_hierarchy(op, Q, fam, 3)
    return op, fam, radius, hier


def rel(a, b):
    return np.linalg.norm(a - b) / np.linalg.norm(b)


def test_family_evaluation():
    fam = EpsFamily([np.ones(2), 2 * np.ones(2)], {(0, 1): np.array([1.0, -1.0])}, {})
    np.testing.assert_allclose(fam([0.5, 0.25]), 0.5 + 0.5 + 0.125 * np.array([1, -1]))
    assert not np.any(fam([0.0, 0.0]))
    assert fam.pair(1, 0) is fam.second[(0, 1)]


def test_first_order_is_linear_solve_when_q_vanishes(setup):
    op, fam, radius, _ = setup
    ctx = SolverContext(op, 0.0)
    d = mixed_derivative(ctx, fam, (1,), 1e-2, scale=radius)
    np.testing.assert_allclose(d, solve_linear_dirichlet(op, fam.first[1]), atol=1e-8)


def test_second_order_difference_matches_direct(setup):
    op, fam, radius, hier = setup
    ctx = SolverContext(op, Q)
    d = mixed_derivative(ctx, fam, (0, 1), 1e-2, scale=radius)
    assert rel(d, hier.w2[(0, 1)]) <= 1e-3


def test_difference_error_is_second_order(setup):
    # steps large enough that truncation dominates roundoff
    op, fam, radius, hier = setup
    ctx = SolverContext(op, Q)
    e1, e2 = (rel(mixed_derivative(ctx, fam, (0, 1), h, scale=radius), hier.w2[(0, 1)]) for h in (0.5, 0.25))
    assert e1 / e2 >= 3.5


def test_third_order_difference_matches_direct(setup):
    op, fam, radius, hier = setup
    ctx = SolverContext(op, Q, jobs=4)
    d = mixed_derivative(ctx, fam, (0, 1, 2), 2e-2, scale=radius)
    assert rel(d, hier.w3[(0, 1, 2)]) <= 5e-3


def test_dn_output_is_boundary_only(setup):
    op, fam, radius, _ = setup
    d = mixed_derivative(SolverContext(op, Q), fam, (0, 1), 1e-2, output="dn", scale=radius)
    assert not np.any(d[op.interior])
    assert np.any(d[op.boundary])


def test_second_linearized_properties(setup, rng):
    op, fam, _, hier = setup
    v = hier.v
    assert not np.any(direct_second_linearized(op, 0.0, v[0], v[1]))
    a = direct_second_linearized(op, Q, v[0], v[1], fam.first[2])
    b = direct_second_linearized(op, Q, v[1], v[0], fam.first[2])
    np.testing.assert_array_equal(a, b)
    harmonic = solve_linear_dirichlet(op, fam.first[2])
    c = direct_second_linearized(op, f"2*({Q})", v[0], v[1], fam.first[2])
    np.testing.assert_allclose(c - harmonic, 2 * (a - harmonic), atol=1e-13)


def test_third_and_fourth_with_zero_first_order(setup):
    op, fam, _, _ = setup
    zero = {i: np.zeros(op.grid.size) for i in range(4)}
    w2 = {p: np.zeros(op.grid.size) for p in itertools.combinations(range(4), 2)}
    w3 = {p: np.zeros(op.grid.size) for p in itertools.combinations(range(4), 3)}
    f = fam.first[0]
    np.testing.assert_allclose(direct_third_linearized(op, Q, zero, w2, (0, 1, 2), f), solve_linear_dirichlet(op, f))
    assert not np.any(direct_fourth_linearized(op, Q, zero, w2, w3))


def test_third_linearized_permutation_symmetric(setup):
    op, _, _, hier = setup
    base = direct_third_linearized(op, Q, hier.v, hier.w2, (0, 1, 2))
    for perm in itertools.permutations((0, 1, 2)):
        np.testing.assert_array_equal(direct_third_linearized(op, Q, hier.v, hier.w2, perm), base)


def test_first_linearization_shared_across_potentials():
    op = build_operator(n=10, V=1.0)
    modes = random_modes(3, 1.0, seed=3)
    fam = identity_family(op, modes)
    h1 = build_hierarchy(op, "1", fam, 2)
    h2 = build_hierarchy(op, "2 + x1", fam, 2)
    for i in range(3):
        np.testing.assert_array_equal(h1.v[i], h2.v[i])


@pytest.mark.parametrize("order", [2, 3, 4])
def test_equal_potentials_give_zero_sides(order):
    op = build_operator(n=10, V=1.0)
    modes = random_modes(5, 1.0, seed=2)
    rep = identity_residual(order, op, "1 + x1", "1 + x1", modes)
    assert rep.boundary_side == 0.0
    assert rep.volume_side == 0.0


def test_order_two_identity_small_grid():
    op = build_operator(n=16, V=1.0)
    modes = random_modes(3, 1.0, seed=1)
    rep = identity_residual(2, op, "0.5 + 8*x1*(1-x1)*y1*(1-y1)*y2*(1-y2)", "0.5", modes)
    assert rep.volume_side != 0
    assert rep.discrepancy <= 0.1


def test_identity_needs_enough_data():
    op = build_operator(n=8)
    with pytest.raises(ValueError):
        identity_residual(4, op, "1", "2", random_modes(4, 0.0))
