"""Gaussian beam quasimodes and their complex geometric optics extensions.

Along a geodesic with Fermi coordinates ``(t, y)`` the beam is

    v(x1, t, y) = exp(sign * s * x1) * tau**(1/8) * exp(i s psi(t, y)) * a(t, y) * chi(|y| / r)

with ``s = c tau + i lam``, ``psi = t + H(t) y**2 / 2`` and ``H = Y'/Y`` for a
solution of the scalar Riccati system ``Y'' + D Y = 0``. In two transversal
dimensions ``D`` equals the Gaussian curvature along the geodesic.

Amplitude corrections
---------------------
Writing ``exp(i s t) exp(i s H y^2/2) B`` into the flat equation leaves
``(L1 + L0) B`` where ``L1`` raises the Gaussian scaling order by one
(``y ~ tau^{-1/2}``) and ``L0`` preserves it. Correction ``k`` is a sum of
monomials ``s^(p/2-k) y^p b_p(t)`` fixed by ``L1 B_k = -L0 B_{k-1}``; each
coefficient solves a first-order transport ODE along the geodesic. Every
added level lowers the residual by one power of ``tau``.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np
from scipy import stats
from scipy.interpolate import CubicHermiteSpline, make_interp_spline

from .geometry import FermiChart, Geodesic, GeometryError, TransversalGeometry


class RiccatiError(ValueError):
    pass


# ---------------------------------------------------------------------------
# Riccati system


@dataclass(frozen=True)
class RiccatiSolution:
    t: np.ndarray
    Y: np.ndarray
    Ydot: np.ndarray
    D: np.ndarray
    initial: tuple[complex, complex]
    _Y: CubicHermiteSpline = field(repr=False, default=None)
    _Yd: CubicHermiteSpline = field(repr=False, default=None)
    _logY: CubicHermiteSpline = field(repr=False, default=None)
    _D: object = field(repr=False, default=None)

    @property
    def H(self) -> np.ndarray:
        return self.Ydot / self.Y

    def conservation_defect(self) -> float:
        """max |Im H |Y|^2 - 1| over the samples."""
        return float(np.max(np.abs(np.imag(self.H) * np.abs(self.Y) ** 2 - 1.0)))

    def H_at(self, t):
        return self._Yd(t) / self._Y(t)

    def D_at(self, t):
        return self._D(t)

    def H_jet(self, t):
        """H, H', H'' from the Riccati identity H' = -D - H^2."""
        H = self.H_at(t)
        D = self._D(t)
        Dd = self._D.derivative()(t)
        Hd = -D - H * H
        Hdd = -Dd - 2 * H * Hd
        return H, Hd, Hdd

    def a00(self, t):
        """Principal amplitude Y^{-1/2} on a continuous branch."""
        return np.exp(-0.5 * self._logY(t))


def solve_riccati(geom: TransversalGeometry, geo: Geodesic, Y0: complex = 1.0, Ydot0: complex = 1j) -> RiccatiSolution:
    """Integrate ``Y'' + D Y = 0`` along the geodesic from its origin ``t = 0``."""
    Y0, Ydot0 = complex(Y0), complex(Ydot0)
    if abs(Y0) < 1e-10 or (Ydot0 / Y0).imag <= 0.0:
        raise RiccatiError("initial data must satisfy Im(Ydot0 / Y0) > 0")
    t = geo.t
    if geom.is_flat:
        D = np.zeros_like(t)
        Dmid = lambda tm: np.zeros_like(np.asarray(tm, dtype=float))
    else:
        D = geom.gaussian_curvature(geo.x)
        Dmid = lambda tm: geom.gaussian_curvature(geo.point(tm))
    i0 = int(np.argmin(np.abs(t)))
    Y = np.empty(len(t), complex)
    Yd = np.empty(len(t), complex)
    Y[i0], Yd[i0] = Y0, Ydot0

    def step(y, yd, tk, dk, dmid, dnext, hh):
        k1y, k1d = yd, -dk * y
        k2y, k2d = yd + 0.5 * hh * k1d, -dmid * (y + 0.5 * hh * k1y)
        k3y, k3d = yd + 0.5 * hh * k2d, -dmid * (y + 0.5 * hh * k2y)
        k4y, k4d = yd + hh * k3d, -dnext * (y + hh * k3y)
        return y + hh / 6 * (k1y + 2 * k2y + 2 * k3y + k4y), yd + hh / 6 * (k1d + 2 * k2d + 2 * k3d + k4d)

    mids_f = Dmid(0.5 * (t[i0:-1] + t[i0 + 1:]))
    for n, k in enumerate(range(i0, len(t) - 1)):
        hh = t[k + 1] - t[k]
        Y[k + 1], Yd[k + 1] = step(Y[k], Yd[k], t[k], D[k], mids_f[n], D[k + 1], hh)
        if abs(Y[k + 1]) < 1e-10:
            raise RiccatiError(f"Y degenerates near t={t[k + 1]:.4f}")
    mids_b = Dmid(0.5 * (t[1:i0 + 1] + t[:i0]))
    for k in range(i0, 0, -1):
        hh = t[k - 1] - t[k]
        Y[k - 1], Yd[k - 1] = step(Y[k], Yd[k], t[k], D[k], mids_b[k - 1], D[k - 1], hh)
        if abs(Y[k - 1]) < 1e-10:
            raise RiccatiError(f"Y degenerates near t={t[k - 1]:.4f}")
    if np.min(np.imag(Yd / Y)) <= 0.0:
        raise RiccatiError("Im H lost positivity")
    logY = np.log(np.abs(Y)) + 1j * np.unwrap(np.angle(Y))
    if np.max(np.abs(np.diff(np.imag(logY)))) > np.pi / 2:
        raise RiccatiError("branch of Y^{-1/2} jumps between samples")
    sY = CubicHermiteSpline(t, Y, Yd)
    sYd = CubicHermiteSpline(t, Yd, -D * Y)
    slog = CubicHermiteSpline(t, logY, Yd / Y)
    sD = make_interp_spline(t, D, k=5) if not geom.is_flat else _Zero()
    return RiccatiSolution(t, Y, Yd, D, (Y0, Ydot0), sY, sYd, slog, sD)


class _Zero:
    def __call__(self, t):
        return np.zeros_like(np.asarray(t, dtype=float))

    def derivative(self, n=1):
        return self


# ---------------------------------------------------------------------------
# phase


@dataclass(frozen=True)
class PhaseFunction:
    """psi(t, y) = t + H(t) y^2 / 2 in Fermi coordinates."""

    riccati: RiccatiSolution
    chart: FermiChart

    def value(self, t, y):
        return t + 0.5 * self.riccati.H_at(t) * y**2

    def jet(self, t, y):
        """psi and its (t, y) partials: psi, pt, py, ptt, pty, pyy."""
        H, Hd, Hdd = self.riccati.H_jet(t)
        y2 = y * y
        return (t + 0.5 * H * y2, 1.0 + 0.5 * Hd * y2, H * y, 0.5 * Hdd * y2, Hd * y, H + 0 * y)


def build_phase(riccati: RiccatiSolution, chart: FermiChart) -> PhaseFunction:
    return PhaseFunction(riccati, chart)


# ---------------------------------------------------------------------------
# cutoff


def cutoff(r):
    """chi(r): 1 on r <= 1/2, 0 on r >= 1, exp(1 - 1/(1 - q^2)) with q = 2r - 1 between."""
    r = np.abs(np.asarray(r, dtype=float))
    q = np.clip(2 * r - 1, 0.0, 1.0)
    out = np.zeros_like(r)
    mid = (q > 0) & (q < 1)
    out[q <= 0] = 1.0
    out[mid] = np.exp(1.0 - 1.0 / (1.0 - q[mid] ** 2))
    return out


def cutoff_jet(r):
    """chi, chi', chi'' as functions of r >= 0."""
    r = np.abs(np.asarray(r, dtype=float))
    q = 2 * r - 1
    chi = cutoff(r)
    d1 = np.zeros_like(r)
    d2 = np.zeros_like(r)
    mid = (q > 0) & (q < 1)
    qm = q[mid]
    w = 1.0 - qm**2
    f1 = -2 * qm / w**2  # d/dq of the exponent
    f2 = -2 / w**2 - 8 * qm**2 / w**3
    c = chi[mid]
    d1[mid] = 2 * f1 * c
    d2[mid] = 4 * (f2 + f1 * f1) * c
    return chi, d1, d2


# ---------------------------------------------------------------------------
# amplitude correction hierarchy (flat transversal metric)


@dataclass(frozen=True)
class CorrectionLevel:
    """Coefficients b_p(t) of the monomials s^(p/2 - k) y^p at level k."""

    level: int
    splines: dict  # p -> spline of complex b_p


def _spline(t, vals):
    return make_interp_spline(t, vals, k=5)


def _apply_L0(t, level: CorrectionLevel, H, Hd, Hdd, V):
    """Return {(m, p): samples} of -L0 applied to a correction level."""
    out: dict[tuple[int, int], np.ndarray] = {}

    def add(m, p, vals):
        out[(m, p)] = out.get((m, p), 0) + vals

    for p, sp in level.splines.items():
        m = p // 2 - level.level
        b = sp(t)
        bd = sp.derivative(1)(t)
        bdd = sp.derivative(2)(t)
        add(m, p, -(bdd - V * b))
        add(m + 1, p + 2, -(1j * Hd * bd + 0.5j * Hdd * b))
        add(m + 2, p + 4, 0.25 * Hd * Hd * b)
    return out


def build_corrections(riccati: RiccatiSolution, count: int, V: float = 0.0) -> list[CorrectionLevel]:
    """Levels 0..count of the flat correction hierarchy with constant V."""
    t = riccati.t
    H, Hd, Hdd = riccati.H_jet(t)
    logY = riccati._logY(t)
    i0 = int(np.argmin(np.abs(t)))
    levels = [CorrectionLevel(0, {0: _spline(t, riccati.a00(t))})]
    for k in range(1, count + 1):
        src = _apply_L0(t, levels[-1], H, Hd, Hdd, V)
        # F^{(p)} is the coefficient of s^{p/2 - k + 1} y^p
        F = {p: vals for (m, p), vals in src.items() if m == p // 2 - k + 1}
        pmax = max(F)
        coeffs: dict[int, object] = {}
        upper = np.zeros_like(t, dtype=complex)
        for p in range(pmax, -1, -2):
            rhs = (F.get(p, 0) - (p + 2) * (p + 1) * upper) / 2j
            # b' + (p + 1/2) H b = rhs, solved with the integrating factor Y^{p+1/2}
            weight = np.exp((p + 0.5) * logY)
            prim = make_interp_spline(t, weight * rhs, k=5).antiderivative()
            vals = (prim(t) - prim(t[i0])) / weight
            coeffs[p] = _spline(t, vals)
            upper = vals
        levels.append(CorrectionLevel(k, coeffs))
    return levels


def _amplitude_jet(levels, s, t, y):
    """a and partials (t, y, tt, ty, yy) of sum_k sum_p s^(p/2-k) y^p b_p(t)."""
    a = np.zeros(np.broadcast(t, y).shape, complex)
    at, ay, att, aty, ayy = (np.zeros_like(a) for _ in range(5))
    for lev in levels:
        for p, sp in lev.splines.items():
            c = s ** (p // 2 - lev.level)
            b, bd, bdd = sp(t), sp.derivative(1)(t), sp.derivative(2)(t)
            yp = y**p
            yp1 = p * y ** (p - 1) if p >= 1 else 0.0
            yp2 = p * (p - 1) * y ** (p - 2) if p >= 2 else 0.0
            a += c * b * yp
            at += c * bd * yp
            att += c * bdd * yp
            ay += c * b * yp1
            aty += c * bd * yp1
            ayy += c * b * yp2
    return a, at, ay, att, aty, ayy


# ---------------------------------------------------------------------------
# CGO


@dataclass(frozen=True)
class CGOSolution:
    """Closed-form CGO beam; values are ``exp(E) * A``.

    The exponent ``E`` and amplitude ``A`` are returned separately so that
    products of many beams can combine exponents before exponentiating.
    """

    phase: PhaseFunction
    c: float
    tau: float
    lam: float
    sign: int
    radius: float
    levels: tuple
    V_used: float = 0.0

    @property
    def s(self) -> complex:
        return self.c * self.tau + 1j * self.lam

    @property
    def chart(self) -> FermiChart:
        return self.phase.chart

    @property
    def riccati(self) -> RiccatiSolution:
        return self.phase.riccati

    def with_params(self, **kw) -> "CGOSolution":
        return replace(self, **kw)

    def _in_range(self, t):
        lo, hi = self.chart.t_bounds
        return (t >= lo) & (t <= hi)

    def fermi_jet(self, t, y):
        """Exponent and amplitude partials in (t, y), excluding the x1 part."""
        t = np.asarray(t, dtype=float)
        y = np.asarray(y, dtype=float)
        lo, hi = self.chart.t_bounds
        tc = np.clip(t, lo, hi)
        s = self.s
        psi, pt, py, ptt, pty, pyy = self.phase.jet(tc, y)
        E = 1j * s * np.array([psi, pt, py, ptt, pty, pyy])
        a, at, ay, att, aty, ayy = _amplitude_jet(self.levels, s, tc, y)
        r = y / self.radius
        chi, c1, c2 = cutoff_jet(r)
        sg = np.sign(y)
        c1 = c1 * sg / self.radius
        c2 = c2 / self.radius**2
        norm = self.tau ** 0.125
        A = norm * np.array([
            a * chi,
            at * chi,
            ay * chi + a * c1,
            att * chi,
            aty * chi + at * c1,
            ayy * chi + 2 * ay * c1 + a * c2,
        ])
        A = A * self._in_range(t)
        return E, A

    def exponent_x1(self, x1):
        return self.sign * self.s * np.asarray(x1, dtype=float)

    def value(self, x1, xp):
        t, y = self.chart.inverse_map(np.asarray(xp, dtype=float))
        E, A = self.fermi_jet(t, y)
        ex = self.exponent_x1(x1) + E[0]
        live = A[0] != 0
        return np.where(live, np.exp(np.where(live, ex, 0.0)) * A[0], 0.0)

    def jet(self, x1, xp):
        """Chart-coordinate jets on (x1, xp1, xp2).

        Returns (E, dE, d2E, A, dA, d2A) with gradient shape (..., 3) and
        Hessian shape (..., 3, 3). ``E`` includes the x1 exponent.
        """
        xp = np.asarray(xp, dtype=float)
        x1 = np.asarray(x1, dtype=float)
        t, y = self.chart.inverse_map(xp)
        Ef, Af = self.fermi_jet(t, y)
        P, Q = _inverse_jets(self.chart, t, y)
        E, dE, d2E = _to_chart(Ef, P, Q)
        A, dA, d2A = _to_chart(Af, P, Q)
        E = E + self.sign * self.s * x1
        dE[..., 0] = self.sign * self.s
        return E, dE, d2E, A, dA, d2A


def _inverse_jets(chart: FermiChart, t, y):
    """P[..., alpha, a] = d(t,y)_alpha/dx_a and Q[..., alpha, a, b] second partials."""
    J = chart.jacobian(t, y)
    P = np.linalg.inv(J)
    if chart.flat:
        return P, np.zeros(P.shape + (2,))
    sx, sy = chart._sx, chart._sy
    X2 = np.empty(np.shape(t) + (2, 2, 2))
    for c, sp in enumerate((sx, sy)):
        X2[..., c, 0, 0] = sp.ev(t, y, dx=2)
        X2[..., c, 0, 1] = X2[..., c, 1, 0] = sp.ev(t, y, dx=1, dy=1)
        X2[..., c, 1, 1] = sp.ev(t, y, dy=2)
    Q = -np.einsum("...Ac,...cBG,...Ba,...Gb->...Aab", P, X2, P, P)
    return P, Q


def _to_chart(F, P, Q):
    """Lift (f, ft, fy, ftt, fty, fyy) to 3-D chart derivatives (x1 first)."""
    f, ft, fy, ftt, fty, fyy = F
    shape = np.shape(f)
    g2 = np.stack([ft, fy], -1)
    h2 = np.stack([np.stack([ftt, fty], -1), np.stack([fty, fyy], -1)], -2)
    grad = np.zeros(shape + (3,), complex)
    hess = np.zeros(shape + (3, 3), complex)
    grad[..., 1:] = np.einsum("...A,...Aa->...a", g2, P)
    hess[..., 1:, 1:] = np.einsum("...AB,...Aa,...Bb->...ab", h2, P, P) + np.einsum("...A,...Aab->...ab", g2, Q)
    return f, grad, hess


def assemble_cgo(phase: PhaseFunction, c: float, tau: float, lam: float = 0.0, sign: int = 1,
                 radius: float | None = None, corrections: int = 0, V: float = 0.0,
                 levels: list | None = None) -> CGOSolution:
    """Assemble a CGO beam; ``radius`` defaults to the chart tube radius."""
    if tau <= 0 or c <= 0:
        raise ValueError("tau and c must be positive")
    if sign not in (1, -1):
        raise ValueError("sign must be +1 or -1")
    tube = phase.chart.tube_radius
    radius = tube if radius is None else float(radius)
    if radius > tube * (1 + 1e-12):
        raise GeometryError(f"cutoff radius {radius} exceeds the tube radius {tube}")
    if levels is None:
        if corrections > 0 and not phase.chart.flat:
            raise GeometryError("amplitude corrections are implemented for flat transversal metrics")
        levels = build_corrections(phase.riccati, corrections, V)
    return CGOSolution(phase, float(c), float(tau), float(lam), int(sign), radius, tuple(levels), float(V))


def make_beam(geom, p0, direction, tube_radius, step=1e-3, Y0=1.0, Ydot0=1j):
    """Trace, frame and solve Riccati for the beam through ``p0`` along ``direction``."""
    from .geometry import fermi_frame, trace_geodesic

    d = np.asarray(direction, dtype=float)
    d = d / geom.norm(np.asarray(p0, dtype=float), d)
    geo = trace_geodesic(geom, p0, d, step=step)
    chart = fermi_frame(geom, geo, tube_radius)
    ric = solve_riccati(geom, geo, Y0, Ydot0)
    return build_phase(ric, chart)


# ---------------------------------------------------------------------------
# residual


@dataclass
class ResidualReport:
    taus: np.ndarray
    residuals: np.ndarray
    norm_kind: str
    slope: float
    slope_ci: tuple[float, float]
    cutoff_fraction: np.ndarray
    cutoff_dominated: bool

    def running_slopes(self):
        out = [np.nan]
        for k in range(2, len(self.taus) + 1):
            out.append(np.polyfit(np.log(self.taus[:k]), np.log(self.residuals[:k]), 1)[0])
        return np.array(out)

    def rows(self):
        sl = self.running_slopes()
        return [
            {"tau": float(t), "norm_kind": self.norm_kind, "residual": float(r), "slope_running": float(s)}
            for t, r, s in zip(self.taus, self.residuals, sl)
        ]


def fit_slope(taus, values):
    """Log-log slope with a 95% confidence interval."""
    res = stats.linregress(np.log(taus), np.log(values))
    n = len(taus)
    if n > 2:
        q = stats.t.ppf(0.975, n - 2) * res.stderr
    else:
        q = 0.0
    return float(res.slope), (float(res.slope - q), float(res.slope + q))


def _gl(a, b, n):
    x, w = np.polynomial.legendre.leggauss(n)
    return 0.5 * (b - a) * x + 0.5 * (b + a), 0.5 * (b - a) * w


def _panels(breaks, n):
    xs, ws = [], []
    for a, b in zip(breaks[:-1], breaks[1:]):
        if b > a:
            x, w = _gl(a, b, n)
            xs.append(x)
            ws.append(w)
    return np.concatenate(xs), np.concatenate(ws)


def _weighted_residual(cgo: CGOSolution, V: Callable, t, y, x1):
    """e^{-sign s x1} (-Delta + V) v on a (x1, t, y) tensor grid (Fermi coordinates)."""
    E, A = cgo.fermi_jet(t, y)
    W = np.exp(E[0]) * A[0]
    Wt = np.exp(E[0]) * (E[1] * A[0] + A[1])
    Wy = np.exp(E[0]) * (E[2] * A[0] + A[2])
    Wtt = np.exp(E[0]) * ((E[3] + E[1] ** 2) * A[0] + 2 * E[1] * A[1] + A[3])
    Wyy = np.exp(E[0]) * ((E[5] + E[2] ** 2) * A[0] + 2 * E[2] * A[2] + A[5])
    J, Jt, Jy, _, _, _ = cgo.chart.sqrt_G_jet(t, y)
    lap = Wtt / J**2 - Jt * Wt / J**3 + Wyy + (Jy / J) * Wy
    xp = cgo.chart.map(t, y)
    Vv = V(x1[:, None], xp[None, :, 0], xp[None, :, 1])
    return (-(cgo.s**2) * W - lap)[None, :] + Vv * W[None, :], J


def residual_norm(cgo: CGOSolution, V: Callable, norm: str = "L2", n: int = 16, geom: TransversalGeometry | None = None):
    """Weighted residual norm over M and the share coming from the cutoff zone."""
    lo, hi = cgo.chart.geodesic.t_range
    Hmin = float(np.min(np.imag(cgo.riccati.H_at(np.linspace(lo, hi, 201)))))
    width = 1.0 / np.sqrt(2 * cgo.c * cgo.tau * Hmin)
    rad = cgo.radius
    yb = sorted({0.0, *[k * width for k in range(1, 13) if k * width < rad], 0.5 * rad, rad})
    yb = np.array(yb)
    ybreaks = np.concatenate([-yb[::-1], yb[1:]])
    tb = np.linspace(lo, hi, max(4, int(np.ceil((hi - lo) / 0.05))) + 1)
    tq, tw = _panels(tb, n)
    yq, yw = _panels(ybreaks, n)
    TT, YY = np.meshgrid(tq, yq, indexing="ij")
    W2 = np.outer(tw, yw)
    x1, w1 = _gl(0.0, 1.0, 6)
    pts = cgo.chart.map(TT.ravel(), YY.ravel())
    if geom is not None:
        inside = geom.contains(pts)
    else:
        inside = np.ones(len(pts), bool)
    R, J = _weighted_residual(cgo, V, TT.ravel(), YY.ravel(), x1)
    dens = np.abs(R) ** 2
    if norm.upper() == "H1":
        dens = dens + _gradient_density(cgo, V, TT.ravel(), YY.ravel(), x1, width)
    elif norm.upper() != "L2":
        raise ValueError(f"unknown norm {norm!r}")
    vol = (W2.ravel() * J * inside)[None, :] * w1[:, None]
    total = float(np.sum(dens * vol))
    zone = (np.abs(YY.ravel()) >= 0.5 * rad)[None, :]
    share = float(np.sum(dens * vol * zone)) / total if total > 0 else 0.0
    return np.sqrt(total), share


def _gradient_density(cgo, V, t, y, x1, width):
    """|grad R|^2 from fourth-order differences in (x1, t, y)."""
    ht = 1e-3
    hy = min(width, 0.01) / 8
    hx = 1e-3
    c = np.array([1, -8, 8, -1]) / 12.0
    offs = np.array([-2, -1, 1, 2])

    def R_at(tt, yy, xx):
        return _weighted_residual(cgo, V, tt, yy, xx)[0]

    Rt = sum(ci * R_at(t + o * ht, y, x1) for ci, o in zip(c, offs)) / ht
    Ry = sum(ci * R_at(t, y + o * hy, x1) for ci, o in zip(c, offs)) / hy
    Rx = sum(ci * R_at(t, y, x1 + o * hx) for ci, o in zip(c, offs)) / hx
    J = cgo.chart.sqrt_G(t, y)
    return np.abs(Rt) ** 2 / J**2 + np.abs(Ry) ** 2 + np.abs(Rx) ** 2


def quasimode_residual(cgo: CGOSolution, V: Callable, norm: str = "L2", taus=(64, 128, 256, 512),
                       geom: TransversalGeometry | None = None, rtol: float = 1e-4) -> ResidualReport:
    """Residual sweep over ``taus`` with adaptive Gauss-Legendre refinement."""
    taus = np.asarray(taus, dtype=float)
    if len(taus) < 2:
        raise ValueError("need at least two tau values")
    res, share = [], []
    for tau in taus:
        beam = cgo.with_params(tau=float(tau))
        n = 12
        prev, sh = residual_norm(beam, V, norm, n, geom)
        while True:
            n *= 2
            cur, sh = residual_norm(beam, V, norm, n, geom)
            if abs(cur - prev) <= rtol * abs(cur) or n >= 96:
                break
            prev = cur
        res.append(cur)
        share.append(sh)
    res = np.array(res)
    slope, ci = fit_slope(taus, res)
    share = np.array(share)
    return ResidualReport(taus, res, norm.upper(), slope, ci, share, bool(np.any(share > 0.5)))


def gaussian_second_moment(cgo: CGOSolution, t: float, n: int = 400):
    """Second moment in y of |v|^2 at fixed t (x1 = 0)."""
    rad = cgo.radius
    y, w = _panels(np.linspace(-rad, rad, 41), 24)
    E, A = cgo.fermi_jet(np.full_like(y, t), y)
    dens = np.abs(np.exp(E[0]) * A[0]) ** 2
    return float(np.sum(w * y**2 * dens) / np.sum(w * dens))
