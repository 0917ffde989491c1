import numpy as np
import pytest
from scipy.integrate import solve_ivp

from cta_lab.expr import parse
from cta_lab.geometry import GeometryError, fermi_frame, trace_geodesic
from cta_lab.quasimode import (
    RiccatiError,
    assemble_cgo,
    build_phase,
    cutoff,
    cutoff_jet,
    gaussian_second_moment,
    make_beam,
    residual_norm,
    solve_riccati,
)


@pytest.fixture(scope="module")
def flat_beam(flat):
    return make_beam(flat, [0.5, 0.5], [1.0, 0.0], 0.5)


def test_flat_riccati_closed_form(flat):
    geo = trace_geodesic(flat, [0.5, 0.5], [1.0, 0.0])
    ric = solve_riccati(flat, geo)
    t = ric.t
    np.testing.assert_allclose(ric.Y, 1 + 1j * t, atol=1e-12)
    np.testing.assert_allclose(ric.H, 1j / (1 + 1j * t), atol=1e-12)
    assert ric.conservation_defect() <= 1e-12


def test_curved_riccati_against_fine_integration(curved):
    p = np.array([0.5, 0.4])
    d = np.array([1.0, 0.3]) / curved.norm(p, np.array([1.0, 0.3]))
    geo = trace_geodesic(curved, p, d)
    ric = solve_riccati(curved, geo)
    assert ric.conservation_defect() <= 1e-8
    assert np.min(np.imag(ric.H)) > 0

    def rhs(t, s):
        return [s[1], -ric.D_at(t) * s[0]]

    lo, hi = ric.t[0], ric.t[-1]
    ref = []
    for span in ((0, hi), (0, lo)):
        sol = solve_ivp(rhs, span, [1 + 0j, 1j], method="DOP853", rtol=1e-12, atol=1e-13, dense_output=True)
        ref.append(sol)
    ts = np.linspace(0, hi, 30)
    np.testing.assert_allclose(ric._Y(ts), ref[0].sol(ts)[0], atol=1e-7)
    ts = np.linspace(lo, 0, 30)
    np.testing.assert_allclose(ric._Y(ts), ref[1].sol(ts)[0], atol=1e-7)


def test_real_initial_data_rejected(flat):
    geo = trace_geodesic(flat, [0.5, 0.5], [1.0, 0.0])
    with pytest.raises(RiccatiError):
        solve_riccati(flat, geo, 1.0, 1.0)


def test_flat_phase(flat_beam):
    t = np.linspace(-0.4, 0.4, 9)
    np.testing.assert_allclose(flat_beam.value(t, 0 * t), t, atol=1e-14)
    np.testing.assert_allclose(flat_beam.value(t, 0.2), t + 0.5 * 1j / (1 + 1j * t) * 0.04, atol=1e-12)
    assert np.imag(flat_beam.value(0.0, 0.1)) >= 0.005 * 0.01
    _, pt, py, *_ = flat_beam.jet(t, 0 * t)
    np.testing.assert_allclose(pt, 1.0, atol=1e-10)
    np.testing.assert_allclose(py, 0.0, atol=1e-10)


def test_curved_phase_gradient_is_velocity(curved):
    p = np.array([0.5, 0.5])
    phase = make_beam(curved, p, [1.0, 0.2], 0.3)
    t = np.linspace(-0.3, 0.3, 7)
    _, pt, py, *_ = phase.jet(t, 0 * t)
    np.testing.assert_allclose(pt, 1.0, atol=1e-10)
    np.testing.assert_allclose(py, 0.0, atol=1e-10)


def test_cutoff_shape_and_derivatives():
    r = np.array([0.0, 0.3, 0.5, 0.75, 1.0, 1.3])
    chi = cutoff(r)
    assert chi[0] == chi[1] == chi[2] == 1.0
    assert 0 < chi[3] < 1 and chi[4] == chi[5] == 0.0
    rr = np.linspace(0.52, 0.98, 9)
    h = 1e-6
    _, d1, d2 = cutoff_jet(rr)
    np.testing.assert_allclose(d1, (cutoff(rr + h) - cutoff(rr - h)) / (2 * h), rtol=1e-6, atol=1e-8)
    np.testing.assert_allclose(d2, (cutoff(rr + 1e-4) - 2 * cutoff(rr) + cutoff(rr - 1e-4)) / 1e-8, rtol=1e-4, atol=1e-5)


def test_cgo_on_geodesic(flat_beam):
    cgo = assemble_cgo(flat_beam, 1.0, 64.0, lam=2.0)
    t = np.linspace(-0.4, 0.4, 5)
    x1 = 0.3
    got = cgo.value(x1, np.stack([0.5 + t, 0.5 + 0 * t], -1))
    s = 64.0 + 2.0j
    expect = np.exp(s * x1) * 64.0 ** 0.125 * np.exp(1j * s * t) * (1 + 1j * t) ** -0.5
    np.testing.assert_allclose(got, expect, rtol=1e-10)


def test_cgo_vanishes_at_tube_edge(flat_beam):
    cgo = assemble_cgo(flat_beam, 1.0, 16.0, radius=0.3)
    assert cgo.value(0.5, np.array([0.5, 0.8])) == 0
    assert cgo.value(0.5, np.array([0.5, 0.2])) == 0


def test_cutoff_radius_larger_than_tube_rejected(flat_beam):
    with pytest.raises(GeometryError):
        assemble_cgo(flat_beam, 1.0, 16.0, radius=0.6)


@pytest.mark.parametrize("t", [-0.3, 0.0, 0.25])
def test_gaussian_width(flat_beam, t):
    cgo = assemble_cgo(flat_beam, 1.0, 256.0)
    imH = np.imag(1j / (1 + 1j * t))
    assert gaussian_second_moment(cgo, t) == pytest.approx(1 / (2 * 256.0 * imH), rel=0.05)


def test_potential_changes_residual_by_at_most_its_action(flat_beam):
    tau = 128.0
    cgo = assemble_cgo(flat_beam, 1.0, tau)
    r0, _ = residual_norm(cgo, parse("0"), n=24)
    r1, _ = residual_norm(cgo, parse("1"), n=24)
    # weighted beam norm: |a|^2 = (1+t^2)^-1/2 and Im H = 1/(1+t^2) give a Gaussian integral
    beam_norm = np.sqrt(tau ** 0.25 * np.sqrt(np.pi / tau))
    assert abs(r1 - r0) <= beam_norm * (1 + 1e-6)
    assert r1 != r0


def test_correction_lowers_residual(flat_beam):
    V = parse("0")
    r = [residual_norm(assemble_cgo(flat_beam, 1.0, 256.0, corrections=k), V, n=32)[0] for k in (0, 1, 2)]
    assert r[0] > r[1] > r[2]


def test_curved_corrections_not_supported(curved):
    phase = make_beam(curved, [0.5, 0.5], [1.0, 0.0], 0.3)
    with pytest.raises(GeometryError):
        assemble_cgo(phase, 1.0, 64.0, corrections=1)


def test_fermi_frame_reused_for_phase(flat):
    geo = trace_geodesic(flat, [0.5, 0.5], [0.0, 1.0])
    ph = build_phase(solve_riccati(flat, geo), fermi_frame(flat, geo, 0.4))
    assert ph.chart.tube_radius == 0.4
