"""Product-phase WKB ansatzes for the second and third linearized equations.

A pair of beams ``v_i, v_j`` with exponents ``tau * Psi_k + Lambda_k`` drives
``(Delta - V) w = 2 q v_i v_j``. Writing ``w = tau^p e^{tau Psi} B`` with
``B = sum_k tau^-k B_k`` the conjugated operator splits as

    e^{-tau Psi} (Delta - V) e^{tau Psi} B
        = tau^2 <grad Psi, grad Psi> B + tau (2 <grad B, grad Psi> + B Delta Psi) + (Delta - V) B,

and matching powers of ``tau`` gives the transport recursion solved here.
Amplitude derivatives are taken by fourth-order central differences; phase
derivatives come from the beam jets.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .quasimode import CGOSolution, ResidualReport, _gl, _inverse_jets, _to_chart, cutoff, fit_slope

FD_STEP = 2e-3


class MarginError(ValueError):
    """The phase form <grad Psi, grad Psi> comes too close to zero on the support."""


# ---------------------------------------------------------------------------
# beam evaluation


def _principal(cgo: CGOSolution) -> CGOSolution:
    return cgo if len(cgo.levels) <= 1 else cgo.with_params(levels=cgo.levels[:1])


def beam_terms(cgo: CGOSolution, xp):
    """psi, transversal gradient, flat transversal Laplacian and amplitude a00*chi."""
    xp = np.asarray(xp, dtype=float)
    chart = cgo.chart
    t, y = chart.inverse_map(xp)
    lo, hi = chart.t_bounds
    tc = np.clip(t, lo, hi)
    jets = cgo.phase.jet(tc, y)
    P, Q = _inverse_jets(chart, tc, y)
    psi, grad, hess = _to_chart(jets, P, Q)
    lap = hess[..., 1, 1] + hess[..., 2, 2]
    base = _principal(cgo)
    _, A = base.fermi_jet(t, y)
    amp = A[0] / cgo.tau**0.125
    return np.asarray(psi, complex), grad[..., 1:], lap, amp


def _metric_factor(geom, xp):
    if geom is None or geom.is_flat:
        return np.ones(np.shape(xp)[:-1])
    return geom.factor.value(xp[..., 0], xp[..., 1])


def _split(X):
    X = np.asarray(X, dtype=float)
    return X[..., 0], X[..., 1:]


@dataclass
class PhaseSample:
    Psi: np.ndarray
    grad: np.ndarray  # (..., 3) complex
    lap: np.ndarray
    gram: np.ndarray
    Lam: np.ndarray
    amps: list
    rho: np.ndarray


@dataclass(frozen=True)
class ProductPhase:
    """Sum of beam exponents: tau * Psi + Lambda with Psi = sum(sigma c x1 + i c psi)."""

    beams: tuple
    geom: object = None

    @property
    def x1_rate(self) -> float:
        return float(sum(b.sign * b.c for b in self.beams))

    @property
    def x1_frequency(self) -> float:
        return float(sum(b.sign * b.lam for b in self.beams))

    def sample(self, X) -> PhaseSample:
        x1, xp = _split(X)
        rho = _metric_factor(self.geom, xp)
        shape = x1.shape
        Psi = self.x1_rate * x1 + 0j
        Lam = 1j * self.x1_frequency * x1
        g = np.zeros(shape + (3,), complex)
        g[..., 0] = self.x1_rate
        lap = np.zeros(shape, complex)
        amps = []
        for b in self.beams:
            psi, gp, lp, a = beam_terms(b, xp)
            Psi = Psi + 1j * b.c * psi
            Lam = Lam - b.lam * psi
            g[..., 1:] += 1j * b.c * gp
            lap = lap + 1j * b.c * lp / rho
            amps.append(a)
        gram = g[..., 0] ** 2 + (g[..., 1] ** 2 + g[..., 2] ** 2) / rho
        return PhaseSample(Psi, g, lap, gram, Lam, amps, rho)

    def gram(self, X):
        return self.sample(X).gram

    def value_at(self, X):
        s = self.sample(X)
        return s.Psi, s.Lam


def pair_phase(cgo_i: CGOSolution, cgo_j: CGOSolution, geom=None) -> ProductPhase:
    return ProductPhase((cgo_i, cgo_j), geom)


def gram_at_intersection(c1, c2, cos_angle, s1=1, s2=1) -> float:
    """<grad Psi, grad Psi> at a crossing point in closed form."""
    return float((s1 * c1 + s2 * c2) ** 2 - (c1 * c1 + c2 * c2 + 2 * c1 * c2 * cos_angle))


# ---------------------------------------------------------------------------
# finite differences on 3-D fields


def _stencil_eval(f: Callable, X, offsets):
    """Evaluate ``f`` at X + offsets[k] for each k in one vectorised call."""
    X = np.asarray(X, dtype=float)
    pts = X[None, ...] + offsets.reshape((len(offsets),) + (1,) * (X.ndim - 1) + (3,))
    return f(pts)


def fd_jet(f: Callable, X, h: float = FD_STEP):
    """Value, gradient (..., 3) and per-axis second derivatives (..., 3)."""
    offs = [np.zeros(3)]
    for ax in range(3):
        for s in (-2, -1, 1, 2):
            e = np.zeros(3)
            e[ax] = s * h
            offs.append(e)
    vals = _stencil_eval(f, X, np.array(offs))
    f0 = vals[0]
    grad = []
    second = []
    for ax in range(3):
        m2, m1, p1, p2 = vals[1 + 4 * ax: 5 + 4 * ax]
        grad.append((m2 - 8 * m1 + 8 * p1 - p2) / (12 * h))
        second.append((-m2 + 16 * m1 - 30 * f0 + 16 * p1 - p2) / (12 * h * h))
    return f0, np.stack(grad, -1), np.stack(second, -1)


def transport(B: Callable, ps: PhaseSample, X, h=FD_STEP):
    """2 <grad B, grad Psi> + B Delta Psi and (Delta - V)-free Laplacian of B."""
    b, gb, sb = fd_jet(B, X, h)
    inner = gb[..., 0] * ps.grad[..., 0] + (gb[..., 1] * ps.grad[..., 1] + gb[..., 2] * ps.grad[..., 2]) / ps.rho
    lap = sb[..., 0] + (sb[..., 1] + sb[..., 2]) / ps.rho
    return b, 2 * inner + b * ps.lap, lap


def _safe_div(num, den):
    out = np.zeros(np.broadcast(num, den).shape, complex)
    ok = den != 0
    np.divide(num, den, out=out, where=ok)
    return out


# ---------------------------------------------------------------------------
# ansatz


def _as_field(q):
    if callable(q):
        return q
    c = float(q)
    return lambda x1, y1, y2: c + 0.0 * x1


def _V_value(V, X):
    if callable(V):
        return V(X[..., 0], X[..., 1], X[..., 2])
    return float(V)


@dataclass
class WKBAnsatz:
    """w = tau^power * exp(tau Psi) * sum_k tau^-k B_k with B_k built lazily."""

    kind: str
    phase: ProductPhase
    sources: dict  # m -> callable, source = tau^power e^{tau Psi} sum tau^-m S_m
    depth: int
    power: float
    V: object = 0.0
    support_center: np.ndarray | None = None
    support_radius: float | None = None
    h: float = FD_STEP
    coefficients: dict = field(default_factory=dict)

    @property
    def first_index(self) -> int:
        return min(self.sources) + 2

    @property
    def indices(self):
        k0 = self.first_index
        return list(range(k0, k0 + self.depth))

    def _support(self, X):
        if self.support_radius is None:
            return 1.0
        d = np.linalg.norm(np.asarray(X)[..., 1:] - self.support_center, axis=-1)
        return cutoff(d / self.support_radius)

    def source(self, m: int) -> Callable:
        """S_m as a function of (X, phase sample or None)."""
        fn = self.sources.get(m)
        if fn is None:
            return lambda X, ps=None: np.zeros(np.shape(X)[:-1], complex)

        def S(X, ps=None):
            if ps is None:
                ps = self.phase.sample(X)
            return fn(X, ps) * self._support(X)

        return S

    def coefficient(self, k: int) -> Callable:
        """B_k = (S_{k-2} - T[B_{k-1}] - (Delta - V) B_{k-2}) / <grad Psi, grad Psi>."""
        if k < self.first_index:
            return lambda X: np.zeros(np.shape(X)[:-1], complex)
        if k in self.coefficients:
            return self.coefficients[k]
        S = self.source(k - 2)
        prev1 = self.coefficient(k - 1) if k - 1 >= self.first_index else None
        prev2 = self.coefficient(k - 2) if k - 2 >= self.first_index else None

        def Bk(X):
            ps = self.phase.sample(X)
            num = S(X, ps)
            if prev1 is not None:
                _, T, _ = transport(prev1, ps, X, self.h)
                num = num - T
            if prev2 is not None:
                b2, _, lap2 = transport(prev2, ps, X, self.h)
                num = num - (lap2 - _V_value(self.V, X) * b2)
            return _safe_div(num, ps.gram)

        self.coefficients[k] = Bk
        return Bk

    def amplitude(self, X, tau: float):
        total = 0.0
        for k in self.indices:
            total = total + tau ** (-k) * self.coefficient(k)(X)
        return total

    def log_value(self, X, tau: float):
        """(exponent, amplitude) so that w = exp(exponent) * amplitude."""
        ps = self.phase.sample(X)
        return tau * ps.Psi, tau**self.power * self.amplitude(X, tau)

    def value(self, X, tau: float):
        E, A = self.log_value(X, tau)
        return np.where(A != 0, np.exp(np.where(A != 0, E, 0)) * A, 0)


def _pair_source(cgo_i, cgo_j, q, phase):
    qf = _as_field(q)

    def S0(X, ps):
        return 2 * qf(X[..., 0], X[..., 1], X[..., 2]) * ps.amps[0] * ps.amps[1] * np.exp(ps.Lam)

    return S0


def transversality_margin(phase: ProductPhase, center, radius: float, n: int = 41, x1: float = 0.5,
                          only_live: bool = True) -> float:
    """min |<grad Psi, grad Psi>| over a disk of given radius around ``center``."""
    center = np.asarray(center, dtype=float)
    u = np.linspace(-radius, radius, n)
    Y1, Y2 = np.meshgrid(u, u, indexing="ij")
    inside = Y1**2 + Y2**2 <= radius**2 + 1e-15
    X = np.stack([np.full(inside.sum(), x1), center[0] + Y1[inside], center[1] + Y2[inside]], -1)
    ps = phase.sample(X)
    g = np.abs(ps.gram)
    if only_live:
        live = np.ones(len(g), bool)
        for a in ps.amps:
            live &= a != 0
        if not live.any():
            return float("inf")
        g = g[live]
    return float(g.min())


def _check_margin(phase, center, radius, floor, label):
    if center is None:
        return
    m = transversality_margin(phase, center, radius)
    if not m > floor:
        raise MarginError(f"{label}: |<grad Psi, grad Psi>| falls to {m:.3g} within radius {radius} of "
                          f"{tuple(np.round(center, 6))}; shrink the support radius")


def second_order_ansatz(cgo_i: CGOSolution, cgo_j: CGOSolution, q, depth: int = 2, V=0.0, geom=None,
                        support_center=None, support_radius: float | None = None, margin_floor: float = 1e-6,
                        check_radius: float | None = None, h: float = FD_STEP) -> WKBAnsatz:
    """Ansatz for (Delta - V) w = 2 q v_i v_j, coefficients B_2, ..., B_{depth+1}."""
    if depth < 1:
        raise ValueError("depth must be at least 1")
    phase = pair_phase(cgo_i, cgo_j, geom)
    center = None if support_center is None else np.asarray(support_center, dtype=float)
    rad = check_radius if check_radius is not None else support_radius
    if center is not None and rad is not None:
        _check_margin(phase, center, rad, margin_floor, "pair")
    return WKBAnsatz("pair", phase, {0: _pair_source(cgo_i, cgo_j, q, phase)}, depth, 0.25, V,
                     center, support_radius, h)


def closed_form_leading(ansatz: WKBAnsatz, q, X):
    """2 q a_i a_j e^Lambda / ((sum sigma c)^2 - |sum c grad psi|^2) evaluated directly."""
    ph = ansatz.phase
    x1, xp = _split(X)
    rho = _metric_factor(ph.geom, xp)
    qf = _as_field(q)
    grad = 0.0
    prod = 1.0
    lam = 1j * ph.x1_frequency * x1
    for b in ph.beams:
        psi, gp, _, a = beam_terms(b, xp)
        grad = grad + b.c * gp
        prod = prod * a
        lam = lam - b.lam * psi
    den = ph.x1_rate**2 - (grad[..., 0] ** 2 + grad[..., 1] ** 2) / rho
    num = 2 * qf(x1, xp[..., 0], xp[..., 1]) * prod * np.exp(lam)
    return _safe_div(num, den) * ansatz._support(X)


TRIPLE_GROUPINGS = ("sum", "displayed")


def third_order_ansatz(cgos: Sequence[CGOSolution], q, pairs: dict | None = None, depth: int = 1, V=0.0,
                       geom=None, support_center=None, support_radius: float | None = None,
                       margin_floor: float = 1e-6, pair_depth: int = 1, h: float = FD_STEP) -> WKBAnsatz:
    """Ansatz for (Delta - V) w = 2 q (v_i w_jk + v_j w_ik + v_k w_ij).

    ``pairs`` maps index pairs (0-based into ``cgos``) to pair ansatzes; missing
    pairs are built with ``pair_depth`` coefficients and the same support.
    """
    if len(cgos) != 3:
        raise ValueError("third_order_ansatz takes three beams")
    center = None if support_center is None else np.asarray(support_center, dtype=float)
    pairs = dict(pairs or {})
    for a, b in ((1, 2), (0, 2), (0, 1)):
        if (a, b) not in pairs:
            pairs[(a, b)] = second_order_ansatz(cgos[a], cgos[b], q, pair_depth, V, geom, center, support_radius,
                                                margin_floor, h=h)
    phase = ProductPhase(tuple(cgos), geom)
    if center is not None and support_radius is not None:
        _check_margin(phase, center, support_radius, margin_floor, "triple")
    qf = _as_field(q)
    singles = {0: (1, 2), 1: (0, 2), 2: (0, 1)}
    kmax = max(max(p.indices) for p in pairs.values())

    def make(m):
        def Sm(X, ps):
            X = np.asarray(X, dtype=float)
            x1 = X[..., 0]
            out = 0.0
            for i, (a, b) in singles.items():
                b_i = cgos[i]
                psi = beam_terms(b_i, X[..., 1:])[0]
                lam_i = 1j * b_i.sign * b_i.lam * x1 - b_i.lam * psi
                w = pairs[(a, b)].coefficient(m)(X)
                out = out + ps.amps[i] * np.exp(lam_i) * w
            return 2 * qf(X[..., 0], X[..., 1], X[..., 2]) * out

        return Sm

    first = min(p.first_index for p in pairs.values())
    sources = {m: make(m) for m in range(first, kmax + 1)}
    return WKBAnsatz("triple", phase, sources, depth, 0.375, V, center, None, h)


def triple_leading_closed_form(q0: float, amps_product: complex, D_pairs: Sequence[float], D_triple: float,
                               grouping: str = "sum") -> complex:
    """Leading triple coefficient at the common crossing for either grouping."""
    if grouping == "sum":
        inner = sum(1.0 / d for d in D_pairs)
    elif grouping == "displayed":
        inner = 1.0 / sum(D_pairs)
    else:
        raise ValueError(f"grouping must be one of {TRIPLE_GROUPINGS}")
    return 4 * q0**2 * amps_product * inner / D_triple


# ---------------------------------------------------------------------------
# residual


@dataclass
class WKBResidual:
    report: ResidualReport
    outside_fraction: float
    converged: bool
    expected_slope: float


def _box_nodes(center, half, n, panels, n1):
    xs, ws = [], []
    edges = np.linspace(-half, half, panels + 1)
    for a, b in zip(edges[:-1], edges[1:]):
        x, w = _gl(a, b, n)
        xs.append(x)
        ws.append(w)
    u = np.concatenate(xs)
    wu = np.concatenate(ws)
    x1, w1 = _gl(0.0, 1.0, n1)
    X1, U, W = np.meshgrid(x1, u, u, indexing="ij")
    WT = w1[:, None, None] * wu[None, :, None] * wu[None, None, :]
    X = np.stack([X1, center[0] + U, center[1] + W], -1)
    return X.reshape(-1, 3), WT.reshape(-1)


def _residual_parts(ansatz: WKBAnsatz, X):
    """Per-coefficient pieces P B_k, T[B_k], (Delta - V) B_k and the sources."""
    ps = ansatz.phase.sample(X)
    Vx = _V_value(ansatz.V, X)
    parts = {}
    for k in ansatz.indices:
        b, T, lap = transport(ansatz.coefficient(k), ps, X, ansatz.h)
        parts[k] = (ps.gram * b, T, lap - Vx * b)
    srcs = {m: ansatz.source(m)(X, ps) for m in ansatz.sources}
    return parts, srcs, ps


def _combine(parts, srcs, tau):
    R = 0.0
    for k, (Pb, T, L) in parts.items():
        R = R + tau ** (2 - k) * Pb + tau ** (1 - k) * T + tau ** (-k) * L
    for m, S in srcs.items():
        R = R - tau ** (-m) * S
    return R


def wkb_residual(ansatz: WKBAnsatz, taus=(64, 128, 256, 512), center=None, half_width: float | None = None,
                 n: int = 8, panels: int = 4, n1: int = 4, rtol: float = 5e-3) -> WKBResidual:
    """Relative L2 norm of e^{-tau Psi} tau^-power ((Delta - V) w - source).

    Normalised by the L2 norm of the leading source so that scaling ``q``
    leaves the report unchanged.
    """
    beams = ansatz.phase.beams
    if center is None:
        center = ansatz.support_center if ansatz.support_center is not None else beams[0].chart.map(0.0, 0.0)
    center = np.asarray(center, dtype=float)
    if half_width is None:
        half_width = ansatz.support_radius or max(b.radius for b in beams)

    def norms(nn):
        X, W = _box_nodes(center, half_width, nn, panels, n1)
        parts, srcs, ps = _residual_parts(ansatz, X)
        lead = np.sqrt(np.sum(W * np.abs(srcs[min(srcs)]) ** 2))
        vals = np.array([np.sqrt(np.sum(W * np.abs(_combine(parts, srcs, t)) ** 2)) for t in taus])
        return vals / lead, (parts, srcs, ps, X, W)

    v1, _ = norms(n)
    v2, data = norms(2 * n)
    converged = bool(np.all(np.abs(v2 - v1) <= rtol * np.abs(v2) + 1e-14))
    parts, srcs, ps, X, W = data
    # share of the Gaussian-weighted residual carried by the transition zone of the beams
    inside = np.ones(len(X), bool)
    for b in beams:
        t, y = b.chart.inverse_map(X[:, 1:])
        inside &= np.abs(y) <= 0.5 * b.radius
    if ansatz.support_radius is not None:
        inside &= np.linalg.norm(X[:, 1:] - center, axis=-1) <= 0.5 * ansatz.support_radius
    tau = float(taus[-1])
    weight = np.exp(2 * tau * (ps.Psi.real - np.max(ps.Psi.real)))
    R = np.abs(_combine(parts, srcs, tau)) ** 2 * weight * W
    total = R.sum()
    outside = float(R[~inside].sum() / total) if total > 0 else 0.0
    slope, ci = fit_slope(taus, v2)
    rep = ResidualReport(np.asarray(taus, float), v2, "L2-weighted", slope, ci, np.full(len(taus), outside),
                         outside > 0.5)
    return WKBResidual(rep, outside, converged, -float(ansatz.depth))


def coefficient_grid(ansatz: WKBAnsatz, k: int, x1: float, center, half_width: float, n: int = 41):
    """Sample B_k on an n x n transversal grid at fixed x1 for plotting."""
    u = np.linspace(-half_width, half_width, n)
    Y1, Y2 = np.meshgrid(center[0] + u, center[1] + u, indexing="ij")
    X = np.stack([np.full_like(Y1, x1), Y1, Y2], -1)
    return Y1, Y2, ansatz.coefficient(k)(X)
