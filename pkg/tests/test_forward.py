import numpy as np
import pytest

from cta_lab.forward import (
    NewtonDivergence,
    boundary_flux,
    build_operator,
    check_zero_eigenvalue,
    conformal_reduce,
    dn_map,
    face_interior_mask,
    faces,
    grid_field,
    normal_difference_flux,
    solve_linear_dirichlet,
    solve_semilinear,
    with_potential,
)
from cta_lab.geometry import fit_order


@pytest.fixture(scope="module")
def op16():
    return build_operator(n=16)


def _interior_field(op, rng):
    u = rng.standard_normal(op.grid.size)
    u[op.boundary] = 0
    return u


def test_flat_operator_is_seven_point(op16, rng):
    u = rng.standard_normal(op16.grid.size)
    U = u.reshape(op16.grid.n)
    h = op16.grid.h[0]
    lap = (U[2:, 1:-1, 1:-1] + U[:-2, 1:-1, 1:-1] + U[1:-1, 2:, 1:-1] + U[1:-1, :-2, 1:-1]
           + U[1:-1, 1:-1, 2:] + U[1:-1, 1:-1, :-2] - 6 * U[1:-1, 1:-1, 1:-1]) / h**2
    got = op16.laplacian(u).reshape(op16.grid.n)[1:-1, 1:-1, 1:-1]
    np.testing.assert_allclose(got, lap, rtol=1e-12, atol=1e-9)


@pytest.mark.parametrize("eps", [0.0, 0.05])
def test_bilinear_form_symmetric(eps, rng):
    from cta_lab.geometry import build_transversal

    geom = build_transversal("perturbed-square" if eps else "flat-square", eps)
    op = build_operator(geom, 12, V="1 + x1*y2")
    u, w = _interior_field(op, rng), _interior_field(op, rng)
    a = w @ op.apply(u)
    b = u @ op.apply(w)
    assert abs(a - b) <= 1e-10 * np.linalg.norm(u) * np.linalg.norm(w)


def test_discrete_integration_by_parts(curved, rng):
    op = build_operator(curved, 12)
    u, w = rng.standard_normal(op.grid.size), rng.standard_normal(op.grid.size)
    I = op.interior
    vol = np.sum(op.mass[I] * (-op.laplacian(u)[I] * w[I] + op.laplacian(w)[I] * u[I]))
    B = op.boundary
    bdry = np.sum(op.area[B] * (boundary_flux(op, w)[B] * u[B] - boundary_flux(op, u)[B] * w[B]))
    assert abs(vol - bdry) <= 1e-9 * max(1.0, abs(vol))


def test_conformal_constants(op16):
    red = conformal_reduce(op16, "1", V="x1", q="1 + y1")
    np.testing.assert_allclose(red.V, grid_field(op16, "x1"), atol=1e-12)
    np.testing.assert_allclose(red.q, grid_field(op16, "1 + y1"), atol=1e-15)
    red = conformal_reduce(op16, "4", V=0.0, q=1.0)
    np.testing.assert_allclose(red.q, 0.5)
    np.testing.assert_allclose(red.V, 0.0, atol=1e-9)


def test_conformal_linear_factor_second_order():
    errs, hs = [], []
    for n in (9, 17, 33):
        op = build_operator(n=n)
        red = conformal_reduce(op, "1 + 0.1*x1")
        X1 = op.grid.coords[0].ravel()
        exact = -(5 / 1600) * (1 + 0.1 * X1) ** -2
        errs.append(np.max(np.abs(red.V - exact)[op.interior]))
        hs.append(op.grid.h[0])
    assert fit_order(hs, errs) >= 1.8


def test_nonpositive_conformal_factor_rejected(op16):
    with pytest.raises(ValueError):
        conformal_reduce(op16, "x1 - 0.5")


def test_zero_data_gives_zero(op16):
    sol = solve_semilinear(op16, 1.0, np.zeros(op16.grid.size))
    assert not np.any(sol.u)
    assert not np.any(dn_map(op16, 1.0, np.zeros(op16.grid.size)))
    assert not np.any(solve_linear_dirichlet(op16))


def test_linear_case_matches_linear_solve(op16, rng):
    f = rng.standard_normal(op16.grid.size) * 0.01
    sol = solve_semilinear(op16, 0.0, f)
    np.testing.assert_allclose(sol.u, solve_linear_dirichlet(op16, f), atol=1e-14)


def test_semilinear_against_fixed_point():
    op = build_operator(n=16, V=1.0)
    f = np.full(op.grid.size, 0.01)
    sol = solve_semilinear(op, 1.0, f)
    assert sol.iterations <= 6
    assert 0.005 <= np.max(np.abs(sol.u)) <= 0.02
    u = solve_linear_dirichlet(op, f)
    for _ in range(60):
        u = solve_linear_dirichlet(op, f, source=-u * u)
    np.testing.assert_allclose(sol.u, u, atol=1e-11)


def test_smallness_stability():
    op = build_operator(n=12, V=1.0)
    g = grid_field(op, "1 + x1*y1")
    C = [solve_semilinear(op, 1.0, s * g).stability for s in (0.002, 0.005, 0.01, 0.02)]
    assert max(C) / min(C) <= 1.2


def test_large_data_diverges():
    op = build_operator(n=10, V=1.0)
    with pytest.raises(NewtonDivergence):
        solve_semilinear(op, -1.0, np.full(op.grid.size, 200.0), max_iter=8)


def test_linear_function_reproduced(op16):
    x1 = grid_field(op16, "x1")
    np.testing.assert_allclose(solve_linear_dirichlet(op16, x1), x1, atol=1e-12)


def test_reciprocity(curved, rng):
    op = build_operator(curved, 12, V="1 + x1")
    s1, s2 = rng.standard_normal(op.grid.size), rng.standard_normal(op.grid.size)
    a = np.sum(op.mass * solve_linear_dirichlet(op, source=s1) * s2)
    b = np.sum(op.mass * solve_linear_dirichlet(op, source=s2) * s1)
    assert abs(a - b) <= 1e-9 * abs(a)


def test_dn_of_linear_function(op16):
    flux = faces(op16, boundary_flux(op16, grid_field(op16, "x1")))
    mask = faces(op16, face_interior_mask(op16.grid))
    np.testing.assert_allclose(flux["x1=0"][mask["x1=0"]], -1, atol=1e-10)
    np.testing.assert_allclose(flux["x1=1"][mask["x1=1"]], 1, atol=1e-10)
    for k in ("y1=0", "y1=1", "y2=0", "y2=1"):
        np.testing.assert_allclose(flux[k][mask[k]], 0, atol=1e-10)


def test_variational_and_difference_flux_agree_under_refinement():
    errs = []
    for n in (9, 17, 33):
        op = build_operator(n=n, V=1.0)
        f = grid_field(op, "0.01*(1 + x1*y1 + y2^2)")
        u = solve_semilinear(op, 1.0, f).u
        mask = face_interior_mask(op.grid)
        a = boundary_flux(op, u, 1.0)[mask]
        b = normal_difference_flux(op, u)[mask]
        errs.append(np.linalg.norm(a - b) / np.linalg.norm(b))
    assert errs[0] > errs[1] > errs[2]


def test_grid_convergence_of_solution():
    exact = "exp(1.4142135623730951*x1)*sin(y1)*sin(y2)"
    errs, hs = [], []
    for n in (9, 17, 33):
        op = build_operator(n=n)
        ue = grid_field(op, exact)
        errs.append(np.max(np.abs(solve_linear_dirichlet(op, ue) - ue)))
        hs.append(op.grid.h[0])
    assert fit_order(hs, errs) >= 1.8


def test_lowest_eigenvalue_flat_box():
    op = build_operator(n=32)
    lam = check_zero_eigenvalue(op)
    assert lam == pytest.approx(3 * np.pi**2, rel=0.02)
    assert check_zero_eigenvalue(with_potential(op, 1.0)) > 29


def test_shifted_spectrum_margin_small():
    op = build_operator(n=16)
    lam0 = check_zero_eigenvalue(op)
    assert abs(check_zero_eigenvalue(with_potential(op, -lam0 + 1e-3))) < 1e-2


def test_disk_chart_rejected():
    from cta_lab.geometry import build_transversal

    with pytest.raises(ValueError):
        build_operator(build_transversal("flat-disk"), 8)
