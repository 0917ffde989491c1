import numpy as np
import pytest
from scipy import integrate

from cta_lab.expr import parse
from cta_lab.forward import build_operator, grid_field
from cta_lab.quasimode import assemble_cgo, make_beam
from cta_lab.recovery import (
    RecoveryError,
    asymptotic_identity_integral,
    boundary_recover,
    carleman_probe,
    constant_mode,
    fourier_invert,
    fourier_transform,
    gaussian_constant,
    hessian_constant_cA,
    phase_hessian,
    qtilde_oracle,
    random_family,
    recover_q_profile,
    relative_l2,
    run_recovery,
    scheme_beams,
    sine_mode,
    stationary_phase_limit,
)
from cta_lab.recovery import _normal_derivative
from cta_lab.vectors import build_xi_scheme, build_zeta_scheme

Q3 = "1 + 0.5*sin(pi*x1)"
Q4 = "(0.5*sin(pi*x1))^(1/3)"


# -- Gaussian constant ---------------------------------------------------------


@pytest.mark.parametrize("A", [[[-1.0, 0.0], [0.0, -1.0]], [[-2.0, 0.3], [0.3, -0.7]], [[-0.4, -0.1], [-0.1, -3.0]]])
def test_gaussian_constant_matches_quadrature(A):
    A = np.array(A)
    f = lambda y, x: np.exp(np.array([x, y]) @ A @ np.array([x, y]))
    val, _ = integrate.dblquad(f, -12, 12, -12, 12, epsabs=1e-12, epsrel=1e-12)
    assert gaussian_constant(A) == pytest.approx(val, rel=1e-6)


@pytest.mark.parametrize("A", [[[-1.0, 0.0], [0.0, 0.0]], [[1.0, 0.0], [0.0, -1.0]]])
def test_gaussian_constant_rejects_non_definite(A):
    with pytest.raises(RecoveryError):
        gaussian_constant(A)


def test_flat_phase_hessian_sums_beam_widths(flat):
    scheme = build_xi_scheme(flat, delta=0.1)
    beams = scheme_beams(flat, scheme, 64.0)
    A = phase_hessian(beams, scheme.p0, flat)
    expected = np.zeros((2, 2))
    for u, c in zip(scheme.unit_directions(), scheme.speeds):
        nrm = np.array([-u[1], u[0]])
        expected -= 0.5 * c * np.outer(nrm, nrm)
    assert np.allclose(A, expected, atol=1e-8)


def test_wider_beams_shrink_gaussian_constant(flat):
    p0 = (0.5, 0.5)
    dirs = [(1.0, 0.0), (0.0, 1.0), (1.0, 1.0)]

    def cA(ydot):
        beams = [assemble_cgo(make_beam(flat, p0, d, 0.5, Ydot0=ydot), 1.0, 64.0, 0.0, 1) for d in dirs]
        return hessian_constant_cA(beams, p0, flat)

    assert cA(4j) == pytest.approx(cA(1j) / 4, rel=1e-8)


# -- stationary-phase extrapolation --------------------------------------------


def test_limit_of_synthetic_sequence():
    taus = [64, 128, 256, 512, 1024]
    L = 0.7 - 0.2j
    est = stationary_phase_limit(taus, [L + 3 * t**-0.5 for t in taus])
    assert abs(est.value - L) <= 1e-4
    assert est.slope_coefficient == pytest.approx(3.0)
    assert est.converged


def test_limit_needs_four_taus():
    with pytest.raises(RecoveryError):
        stationary_phase_limit([64, 128, 256], [1.0, 1.0, 1.0])


# -- Fourier inversion ---------------------------------------------------------


def test_bump_round_trip():
    bump = lambda x: np.sin(np.pi * x) ** 4
    lams = np.linspace(-100.0, 100.0, 64)
    inv = fourier_invert(lams, fourier_transform(bump, lams))
    assert relative_l2(inv.profile, bump(inv.x), inv.x) <= 0.01
    assert inv.imag_residue <= 1e-2


def test_zero_data_gives_zero_profile():
    lams = np.linspace(-10, 10, 21)
    inv = fourier_invert(lams, np.zeros(21))
    assert not np.any(inv.profile)


def test_asymmetric_grid_rejected():
    with pytest.raises(RecoveryError, match="symmetric"):
        fourier_invert(np.linspace(-10, 12, 21), np.ones(21))


def test_conjugate_symmetry_violation_rejected():
    lams = np.linspace(-10, 10, 21)
    with pytest.raises(RecoveryError, match="conjugate"):
        fourier_invert(lams, np.exp(1j * lams) * (1 + 0.1j))


# -- asymptotic integrals ------------------------------------------------------


def test_equal_potentials_integral_vanishes(flat):
    scheme = build_xi_scheme(flat, delta=0.1)
    beams = scheme_beams(flat, scheme, 64.0)
    s = asymptotic_identity_integral(beams, Q3, Q3, 3, 64.0, 0.0, flat, scheme.p0)
    assert s.value == 0 and s.raw == 0


@pytest.fixture(scope="module")
def order3(flat):
    return run_recovery(flat, build_xi_scheme(flat, delta=0.1), Q3, "1", 3)


@pytest.fixture(scope="module")
def order4_sign(flat):
    return run_recovery(flat, build_zeta_scheme(flat, delta=0.1), Q4, f"-({Q4})", 4)


def test_order3_recovers_square_difference(order3):
    assert max(order3.per_sample_error) <= 0.10
    assert order3.rel_l2_err <= 0.15
    assert order3.imag_residue <= 0.05
    assert order3.power == 2.5


def test_order3_serialisation_uses_lambda_key(order3):
    import json

    d = json.loads(order3.to_json())
    assert "lambda" in d and "lambdas" not in d
    assert set(order3.csv_rows()[0]) == {"lambda", "limit_re", "limit_im", "oracle_re", "oracle_im"}


def test_sign_case_order3_vanishes_order4_does_not(flat, order4_sign):
    r3 = run_recovery(flat, build_xi_scheme(flat, delta=0.1), Q4, f"-({Q4})", 3, lams=np.linspace(-8, 8, 5))
    assert np.max(np.abs(r3.limit_re) + np.abs(r3.limit_im)) <= 1e-10
    assert np.max(np.abs(order4_sign.limit_re)) > 1e-3
    assert order4_sign.rel_l2_err <= 0.20


def test_profile_from_sign_case(flat, order4_sign):
    r3 = run_recovery(flat, build_xi_scheme(flat, delta=0.1), Q4, f"-({Q4})", 3)
    rep = recover_q_profile(r3, order4_sign)
    assert rep.sign_resolved
    truth = 2 * parse(Q4)(rep.x, 0.5, 0.5)
    assert relative_l2(rep.difference, truth, rep.x) <= 0.20


def test_profile_with_known_background(order3, order4_sign):
    # q2 = 0 halves the cubes of the sign case
    half = type(order4_sign)(**{**order4_sign.__dict__, "profile": list(0.5 * np.asarray(order4_sign.profile))})
    rep = recover_q_profile(order3, half, q2_line=lambda x: np.zeros_like(x))
    truth = parse(Q4)(rep.x, 0.5, 0.5)
    assert relative_l2(rep.difference, truth, rep.x) <= 0.20


# -- boundary determination ----------------------------------------------------

QB = "1 + 0.3*x1 + 0.2*y1*y2"


@pytest.fixture(scope="module")
def bop(flat):
    return build_operator(flat, 12, V="0")


def test_boundary_trace_and_normal_derivative(bop):
    jet = boundary_recover(bop, QB, "0", 2, 0.01)
    assert np.max(np.abs(jet.q_trace - grid_field(bop, QB)[bop.boundary])) <= 1e-6
    dn = _normal_derivative(parse(QB), bop)[bop.boundary]
    assert np.max(np.abs(jet.dnq - dn)) <= 1e-8


def test_boundary_constant_coefficients(bop):
    jet = boundary_recover(bop, "2", "1", 2, 0.01)
    assert np.allclose(jet.q_trace, 2.0, atol=1e-10)
    assert np.max(np.abs(jet.dnq)) <= 1e-8


def test_boundary_power_scaling(bop):
    eps0 = 0.05
    qt = qtilde_oracle(bop, QB, "0", 2, eps0)
    j2 = boundary_recover(bop, QB, "0", 2, eps0, qtilde=qt)
    j3 = boundary_recover(bop, QB, "0", 3, eps0, qtilde=qt)
    assert np.allclose(j3.q_trace, j2.q_trace * (2 * eps0) / (3 * eps0**2), rtol=1e-12)


def test_boundary_eps0_invariance(bop):
    traces = [boundary_recover(bop, QB, "0", 2, e).q_trace for e in (0.005, 0.01, 0.02)]
    assert max(np.max(np.abs(t - traces[0])) for t in traces) <= 1e-4


@pytest.mark.parametrize("m, eps0", [(1, 0.01), (2, 0.0)])
def test_boundary_rejects_bad_parameters(bop, m, eps0):
    with pytest.raises(ValueError):
        boundary_recover(bop, QB, "0", m, eps0)


# -- Carleman probe ------------------------------------------------------------


def test_fourier_mode_jet_matches_fd():
    v = random_family(1, seed=3)[0]
    X = np.array([[0.3, 0.6, 0.2]])
    val, grad, hess = v.jet(X)
    h = 1e-5
    for i in range(3):
        e = np.zeros(3)
        e[i] = h
        gp, gm = v.jet(X + e), v.jet(X - e)
        assert (gp[0] - gm[0]) / (2 * h) == pytest.approx(grad[0, i], rel=1e-6, abs=1e-9)
        assert np.allclose((gp[1] - gm[1]) / (2 * h), hess[0, i], rtol=1e-5, atol=1e-8)


def test_sine_mode_ratio_grows_with_tau():
    rep = carleman_probe([sine_mode()], taus=[8, 16, 32, 64])
    assert np.all(rep.ratios[0] >= rep.taus)


def test_constant_mode_lower_bound():
    V = 1.0
    rep = carleman_probe([constant_mode()], V=V, taus=[8, 16, 32])
    assert np.all(rep.ratios[0] >= rep.taus - V / rep.taus)


def test_random_family_constant_positive_and_stable():
    taus = np.linspace(8, 80, 5)
    a = carleman_probe(random_family(100, seed=0), taus=taus)
    b = carleman_probe(random_family(200, seed=0), taus=taus)
    assert a.C_hat > 0
    assert abs(b.C_hat - a.C_hat) <= 0.1 * a.C_hat
    assert len(a.rows()) == 100 * 5
