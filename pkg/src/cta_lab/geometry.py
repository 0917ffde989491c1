"""Transversal charts, geodesics and Fermi coordinates.

The product manifold is ``M = [0, 1] x M0`` with metric ``dx1^2 + g0`` where
``M0`` is a two-dimensional parameter chart (unit square or disk). The
metric ``g0`` is either flat or conformally perturbed,
``g0 = (1 + eps * phi) I``.

Geodesics are integrated with a fixed-step classical Runge-Kutta scheme in
arc length. Boundary crossings are located by bisection on the step
fraction. Fermi coordinates ``(t, y)`` along a geodesic are built by
shooting normal geodesics from each sample with the (automatically parallel)
unit normal; in two dimensions the metric in these coordinates is
``G(t, y) dt^2 + dy^2`` with ``sqrt(G)`` obeying a scalar Jacobi equation.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.interpolate import CubicHermiteSpline, RectBivariateSpline
from scipy.spatial import cKDTree

from .expr import Expression, parse

CHART_KINDS = ("flat-square", "flat-disk", "perturbed-square")
DEFAULT_PHI = "sin(pi*y1)*sin(pi*y2)"
EXTENSION_FRACTION = 0.10
TANGENCY_ANGLE = 1e-3
PROPER_DET = 1e-6


class GeometryError(ValueError):
    pass


class TrappedGeodesicError(GeometryError):
    pass


class TubeOverlapError(GeometryError):
    pass


# ---------------------------------------------------------------------------
# conformal factor rho = 1 + eps*phi with derivatives


def _fd_derivatives(fn: Callable, y1, y2, h=1e-3):
    """Sixth-order central differences for first and second partials."""
    c1 = np.array([-1 / 60, 3 / 20, -3 / 4, 0.0, 3 / 4, -3 / 20, 1 / 60])
    c2 = np.array([1 / 90, -3 / 20, 3 / 2, -49 / 18, 3 / 2, -3 / 20, 1 / 90])
    offs = np.arange(-3, 4)
    f1 = [fn(y1 + k * h, y2) for k in offs]
    f2 = [fn(y1, y2 + k * h) for k in offs]
    d1 = sum(c * f for c, f in zip(c1, f1)) / h
    d2 = sum(c * f for c, f in zip(c1, f2)) / h
    d11 = sum(c * f for c, f in zip(c2, f1)) / h**2
    d22 = sum(c * f for c, f in zip(c2, f2)) / h**2
    # mixed partial from the tensor product of first-difference weights
    d12 = 0.0
    for a, ca in zip(offs, c1):
        if ca == 0.0:
            continue
        for b, cb in zip(offs, c1):
            if cb == 0.0:
                continue
            d12 = d12 + ca * cb * fn(y1 + a * h, y2 + b * h)
    d12 = d12 / h**2
    return d1, d2, d11, d12, d22


@dataclass(frozen=True)
class ConformalFactor:
    epsilon: float
    phi: Expression | None = None

    def _phi(self, y1, y2):
        if self.phi is None:
            return np.sin(np.pi * y1) * np.sin(np.pi * y2)
        return self.phi(0.0, y1, y2)

    def value(self, y1, y2):
        return 1.0 + self.epsilon * self._phi(y1, y2)

    def jet(self, y1, y2):
        """Return rho, grad rho (..., 2) and Hessian (..., 2, 2)."""
        y1 = np.asarray(y1, dtype=float)
        y2 = np.asarray(y2, dtype=float)
        if self.phi is None:
            s1, c1 = np.sin(np.pi * y1), np.cos(np.pi * y1)
            s2, c2 = np.sin(np.pi * y2), np.cos(np.pi * y2)
            p = s1 * s2
            d1, d2 = np.pi * c1 * s2, np.pi * s1 * c2
            d11 = d22 = -np.pi**2 * p
            d12 = np.pi**2 * c1 * c2
        else:
            p = self._phi(y1, y2)
            d1, d2, d11, d12, d22 = _fd_derivatives(self._phi, y1, y2)
        e = self.epsilon
        grad = e * np.stack(np.broadcast_arrays(d1, d2), axis=-1)
        hess = e * np.stack(
            [np.stack(np.broadcast_arrays(d11, d12), -1), np.stack(np.broadcast_arrays(d12, d22), -1)], -2
        )
        return 1.0 + e * p, grad, hess


# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class TransversalGeometry:
    """Chart plus metric for the transversal factor M0.

    Attributes
    ----------
    kind : one of ``CHART_KINDS``
    factor : conformal factor, ``g0 = factor * identity``
    margin : width of the artificial chart extension used for beam tubes
    """

    kind: str
    factor: ConformalFactor
    margin: float

    # chart description --------------------------------------------------
    @property
    def is_disk(self) -> bool:
        return self.kind == "flat-disk"

    @property
    def is_flat(self) -> bool:
        return self.factor.epsilon == 0.0

    def signed_distance(self, x, extended: bool = False):
        """Negative inside, positive outside (chart units)."""
        x = np.asarray(x, dtype=float)
        pad = self.margin if extended else 0.0
        if self.is_disk:
            r = np.linalg.norm(x - 0.5, axis=-1)
            return r - (0.5 + pad)
        lo = np.minimum(x[..., 0] + pad, 1.0 + pad - x[..., 0])
        lo = np.minimum(lo, np.minimum(x[..., 1] + pad, 1.0 + pad - x[..., 1]))
        outside = np.linalg.norm(np.maximum(np.maximum(-pad - x, x - 1.0 - pad), 0.0), axis=-1)
        return np.where(lo >= 0, -lo, outside)

    def boundary_normal(self, x):
        """Outward Euclidean unit normal of the (non-extended) boundary."""
        x = np.asarray(x, dtype=float)
        if self.is_disk:
            d = x - 0.5
            return d / np.linalg.norm(d, axis=-1, keepdims=True)
        dist = np.stack([x[..., 0], 1 - x[..., 0], x[..., 1], 1 - x[..., 1]], -1)
        k = np.argmin(np.abs(dist), axis=-1)
        normals = np.array([[-1.0, 0.0], [1.0, 0.0], [0.0, -1.0], [0.0, 1.0]])
        return normals[k]

    def contains(self, x, extended: bool = False):
        return self.signed_distance(x, extended) <= 0.0

    # metric -------------------------------------------------------------
    def metric(self, x):
        x = np.asarray(x, dtype=float)
        rho = self.factor.value(x[..., 0], x[..., 1])
        return np.asarray(rho)[..., None, None] * np.eye(2)

    def metric_derivatives(self, x):
        """First and second partials of g0.

        Returns ``dg[..., k, i, j] = d_k g_ij`` and
        ``d2g[..., k, l, i, j] = d_k d_l g_ij``.
        """
        x = np.asarray(x, dtype=float)
        _, grad, hess = self.factor.jet(x[..., 0], x[..., 1])
        eye = np.eye(2)
        return grad[..., :, None, None] * eye, hess[..., :, :, None, None] * eye

    def christoffel(self, x):
        """``gam[..., k, i, j] = Gamma^k_ij`` for the conformal metric."""
        x = np.asarray(x, dtype=float)
        rho, grad, _ = self.factor.jet(x[..., 0], x[..., 1])
        glog = grad / np.asarray(rho)[..., None]
        eye = np.eye(2)
        # Gamma^k_ij = (d_i f delta_jk + d_j f delta_ik - d_k f delta_ij) / 2 with f = log rho
        gam = 0.5 * (
            np.einsum("...i,jk->...kij", glog, eye)
            + np.einsum("...j,ik->...kij", glog, eye)
            - np.einsum("...k,ij->...kij", glog, eye)
        )
        return gam

    def gaussian_curvature(self, x):
        x = np.asarray(x, dtype=float)
        rho, grad, hess = self.factor.jet(x[..., 0], x[..., 1])
        rho = np.asarray(rho)
        lap_log = (hess[..., 0, 0] + hess[..., 1, 1]) / rho - (grad**2).sum(-1) / rho**2
        return -0.5 * lap_log / rho

    def inner(self, x, a, b):
        return np.einsum("...i,...ij,...j->...", a, self.metric(x), b)

    def norm(self, x, a):
        return np.sqrt(self.inner(x, a, a))

    def unit_normal(self, x, v):
        """Unit vector g-orthogonal to ``v`` with positive orientation."""
        g = self.metric(x)
        u = np.stack([-v[..., 1], v[..., 0]], -1)
        w = np.linalg.solve(g, u[..., None])[..., 0]
        return w / np.sqrt(np.einsum("...i,...ij,...j->...", w, g, w))[..., None]

    def diameter(self) -> float:
        return 1.0 if self.is_disk else float(np.sqrt(2.0))


def build_transversal(kind: str = "flat-square", epsilon: float = 0.0, phi: str | None = None,
                      margin_fraction: float = EXTENSION_FRACTION, samples: int = 41) -> TransversalGeometry:
    """Build a transversal chart and check positivity of the metric.

    ``phi`` defaults to ``sin(pi y1) sin(pi y2)``. The extension margin is a
    fixed fraction of the chart diameter.
    """
    if kind not in CHART_KINDS:
        raise GeometryError(f"unknown chart kind {kind!r}; expected one of {CHART_KINDS}")
    if kind.startswith("flat") and epsilon != 0.0:
        raise GeometryError(f"chart kind {kind!r} is flat; epsilon must be 0")
    phi_expr = None
    if phi is not None and str(phi).replace(" ", "") != DEFAULT_PHI.replace(" ", ""):
        phi_expr = parse(phi)
    factor = ConformalFactor(float(epsilon), phi_expr)
    diam = 1.0 if kind == "flat-disk" else float(np.sqrt(2.0))
    geom = TransversalGeometry(kind, factor, margin_fraction * diam)
    s = np.linspace(-geom.margin, 1 + geom.margin, samples)
    X, Y = np.meshgrid(s, s, indexing="ij")
    rho = factor.value(X, Y)
    if not np.all(np.isfinite(rho)) or np.min(rho) <= 0.0:
        raise GeometryError(f"metric is not positive definite (min factor {np.min(rho):.3g})")
    return geom


# ---------------------------------------------------------------------------
# geodesics


@dataclass(frozen=True)
class Geodesic:
    """Arc-length samples of a unit-speed geodesic.

    ``t`` runs over the extended chart; ``t_range`` is the part inside M0.
    The parameter origin ``t = 0`` is the launch point.
    """

    t: np.ndarray
    x: np.ndarray
    v: np.ndarray
    t_range: tuple[float, float]
    endpoints_on_boundary: tuple[bool, bool]
    exit_angles: tuple[float, float]
    nontangential: bool
    step: float
    _spline: CubicHermiteSpline = field(repr=False, compare=False, default=None)

    def point(self, t):
        return self._spline(t)

    def velocity(self, t):
        return self._spline.derivative()(t)

    @property
    def t_extended(self) -> tuple[float, float]:
        return float(self.t[0]), float(self.t[-1])


def _geodesic_rhs(geom: TransversalGeometry, state):
    x, v = state[..., :2], state[..., 2:]
    if geom.is_flat:
        return np.concatenate([v, np.zeros_like(v)], -1)
    gam = geom.christoffel(x)
    acc = -np.einsum("...kij,...i,...j->...k", gam, v, v)
    return np.concatenate([v, acc], -1)


def _rk4(geom, state, h):
    k1 = _geodesic_rhs(geom, state)
    k2 = _geodesic_rhs(geom, state + 0.5 * h * k1)
    k3 = _geodesic_rhs(geom, state + 0.5 * h * k2)
    k4 = _geodesic_rhs(geom, state + h * k3)
    return state + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)


def _exit_angle(geom, x, v):
    n = geom.boundary_normal(x)
    # angle between v and the tangent line, measured with g0
    ginv_n = np.linalg.solve(geom.metric(x), n)
    cosine = abs(float(n @ v)) / np.sqrt(float(n @ ginv_n))
    return float(np.arcsin(min(1.0, cosine)))


def _march(geom, p, v, h, cap):
    """Integrate until the extended chart is left; locate the M0 crossing."""
    state = np.concatenate([p, v]).astype(float)
    ts, states = [0.0], [state]
    crossing = None
    t = 0.0
    while True:
        new = _rk4(geom, state, h)
        t_new = t + h
        if crossing is None and geom.signed_distance(new[:2]) > 0.0 >= geom.signed_distance(state[:2]):
            lo, hi = 0.0, 1.0
            while (hi - lo) * h > 1e-10:
                mid = 0.5 * (lo + hi)
                if geom.signed_distance(_rk4(geom, state, mid * h)[:2]) > 0.0:
                    hi = mid
                else:
                    lo = mid
            hit = _rk4(geom, state, hi * h)
            crossing = (t + hi * h, hit)
        ts.append(t_new)
        states.append(new)
        state, t = new, t_new
        if geom.signed_distance(state[:2], extended=True) > 0.0:
            break
        if t > cap:
            raise TrappedGeodesicError(f"geodesic from {p} did not reach the boundary within arc length {cap}")
    return np.array(ts), np.array(states), crossing


def trace_geodesic(geom: TransversalGeometry, p, v, step: float = 1e-3, cap: float = 50.0) -> Geodesic:
    """Trace the unit-speed geodesic through ``p`` with velocity ``v`` both ways."""
    p = np.asarray(p, dtype=float)
    v = np.asarray(v, dtype=float)
    if not geom.contains(p) or geom.signed_distance(p) >= 0.0:
        raise GeometryError(f"launch point {p} is not interior")
    speed = geom.norm(p, v)
    if abs(speed - 1.0) > 1e-10:
        raise GeometryError(f"launch velocity has g0-norm {speed:.12g}, expected 1")
    tf, sf, cf = _march(geom, p, v, step, cap)
    tb, sb, cb = _march(geom, p, -v, step, cap)
    t = np.concatenate([-tb[:0:-1], tf])
    states = np.concatenate([sb[:0:-1], sf])
    states[: len(tb) - 1, 2:] *= -1.0
    x, vel = states[:, :2], states[:, 2:]
    on_boundary = (cb is not None, cf is not None)
    l1 = -cb[0] if cb is not None else float(t[0])
    l2 = cf[0] if cf is not None else float(t[-1])
    angles = (
        _exit_angle(geom, cb[1][:2], cb[1][2:]) if cb is not None else 0.0,
        _exit_angle(geom, cf[1][:2], cf[1][2:]) if cf is not None else 0.0,
    )
    nontangential = all(on_boundary) and min(angles) > TANGENCY_ANGLE
    spline = CubicHermiteSpline(t, x, vel, axis=0)
    return Geodesic(t, x, vel, (float(l1), float(l2)), on_boundary, angles, nontangential, step, spline)


def unit_speed_defect(geom, geo: Geodesic) -> float:
    return float(np.max(np.abs(geom.norm(geo.x, geo.v) - 1.0)))


def geodesic_residual(geom, geo: Geodesic) -> float:
    """Sup norm of the covariant acceleration, from 4th-order differences."""
    h = geo.step
    v = geo.v
    acc = (-v[4:] + 8 * v[3:-1] - 8 * v[1:-3] + v[:-4]) / (12 * h)
    x, vi = geo.x[2:-2], v[2:-2]
    inside = geom.contains(x)
    if geom.is_flat:
        cov = acc
    else:
        cov = acc + np.einsum("nkij,ni,nj->nk", geom.christoffel(x), vi, vi)
    return float(np.max(np.linalg.norm(cov[inside], axis=-1)))


# ---------------------------------------------------------------------------
# intersections


@dataclass(frozen=True)
class IntersectionPoint:
    point: np.ndarray
    t1: float
    t2: float
    angle: float
    proper: bool


def _inside_part(geo: Geodesic):
    l1, l2 = geo.t_range
    mask = (geo.t >= l1) & (geo.t <= l2)
    return geo.t[mask], geo.x[mask]


def find_proper_intersections(geom, g1: Geodesic, g2: Geodesic, tol: float = 1e-9, stride: int = 10):
    """Crossings of two geodesics inside M0.

    Coarse polyline segments give candidates, then Newton iterations on the
    Hermite interpolants refine each crossing. Coincident geodesics give a
    single record flagged as not proper.
    """
    t1, x1 = _inside_part(g1)
    t2, x2 = _inside_part(g2)
    t1, x1 = t1[::stride], x1[::stride]
    t2, x2 = t2[::stride], x2[::stride]
    # coincidence: every sample of g2 lies on g1
    d_nearest, _ = cKDTree(x1).query(x2)
    seg = np.max(np.linalg.norm(np.diff(x1, axis=0), axis=-1))
    if np.max(d_nearest) < 1e-3 * seg + 1e-9:
        v1, v2 = g1.velocity(0.0), g2.velocity(0.0)
        return [IntersectionPoint(g1.point(0.0), 0.0, 0.0, _angle(geom, g1.point(0.0), v1, v2), False)]
    a0, a1 = x1[:-1], x1[1:]
    b0, b1 = x2[:-1], x2[1:]
    da = (a1 - a0)[:, None, :]
    db = (b1 - b0)[None, :, :]
    r = b0[None, :, :] - a0[:, None, :]
    den = da[..., 0] * db[..., 1] - da[..., 1] * db[..., 0]
    with np.errstate(divide="ignore", invalid="ignore"):
        s = (r[..., 0] * db[..., 1] - r[..., 1] * db[..., 0]) / den
        u = (r[..., 0] * da[..., 1] - r[..., 1] * da[..., 0]) / den
    slack = 1e-6
    hit = (np.abs(den) > 0) & (s >= -slack) & (s <= 1 + slack) & (u >= -slack) & (u <= 1 + slack)
    out: list[IntersectionPoint] = []
    for i, j in zip(*np.nonzero(hit)):
        ta = t1[i] + s[i, j] * (t1[i + 1] - t1[i])
        tb = t2[j] + u[i, j] * (t2[j + 1] - t2[j])
        for _ in range(30):
            diff = g1.point(ta) - g2.point(tb)
            jac = np.stack([g1.velocity(ta), -g2.velocity(tb)], -1)
            try:
                delta = np.linalg.solve(jac, diff)
            except np.linalg.LinAlgError:
                break
            ta, tb = ta - delta[0], tb - delta[1]
            if np.linalg.norm(delta) < 1e-14:
                break
        p = g1.point(ta)
        if np.linalg.norm(p - g2.point(tb)) > max(tol, 1e-8):
            continue
        if any(np.linalg.norm(p - q.point) < 1e-7 for q in out):
            continue
        va, vb = g1.velocity(ta), g2.velocity(tb)
        det = abs(va[0] * vb[1] - va[1] * vb[0])
        out.append(IntersectionPoint(p, float(ta), float(tb), _angle(geom, p, va, vb), bool(det > PROPER_DET)))
    return out


def _angle(geom, p, a, b):
    c = geom.inner(p, a, b) / (geom.norm(p, a) * geom.norm(p, b))
    return float(np.arccos(np.clip(c, -1.0, 1.0)))


# ---------------------------------------------------------------------------
# Fermi coordinates


@dataclass
class FermiChart:
    """Fermi coordinates ``(t, y)`` in a tube of radius ``tube_radius``.

    Flat charts use the exact affine map. Curved charts tabulate normal
    geodesics and the Jacobi factor ``sqrt(G)`` and interpolate them with
    quintic tensor splines.
    """

    geodesic: Geodesic
    tube_radius: float
    flat: bool
    _origin: np.ndarray = field(repr=False, default=None)
    _tangent: np.ndarray = field(repr=False, default=None)
    _normal: np.ndarray = field(repr=False, default=None)
    _sx: RectBivariateSpline = field(repr=False, default=None)
    _sy: RectBivariateSpline = field(repr=False, default=None)
    _sj: RectBivariateSpline = field(repr=False, default=None)
    _tree: cKDTree = field(repr=False, default=None)
    _tree_ty: np.ndarray = field(repr=False, default=None)

    @property
    def t_bounds(self):
        return self.geodesic.t_extended

    def map(self, t, y):
        t = np.asarray(t, dtype=float)
        y = np.asarray(y, dtype=float)
        if self.flat:
            t, y = np.broadcast_arrays(t, y)
            return self._origin + t[..., None] * self._tangent + y[..., None] * self._normal
        t, y = np.broadcast_arrays(t, y)
        return np.stack([self._sx.ev(t, y), self._sy.ev(t, y)], -1)

    def jacobian(self, t, y):
        """``J[..., a, b] = d x_a / d (t, y)_b``."""
        t, y = np.broadcast_arrays(np.asarray(t, dtype=float), np.asarray(y, dtype=float))
        if self.flat:
            J = np.empty(t.shape + (2, 2))
            J[..., :, 0] = self._tangent
            J[..., :, 1] = self._normal
            return J
        return np.stack(
            [
                np.stack([self._sx.ev(t, y, dx=1), self._sx.ev(t, y, dy=1)], -1),
                np.stack([self._sy.ev(t, y, dx=1), self._sy.ev(t, y, dy=1)], -1),
            ],
            -2,
        )

    def sqrt_G(self, t, y):
        """Length factor of d/dt in Fermi coordinates (1 on the geodesic)."""
        if self.flat:
            return np.ones(np.broadcast(np.asarray(t), np.asarray(y)).shape)
        return self._sj.ev(t, y)

    def sqrt_G_jet(self, t, y):
        """sqrt(G) and its partials (t, y, yy, ty, tt)."""
        if self.flat:
            one = np.ones(np.broadcast(np.asarray(t), np.asarray(y)).shape)
            z = np.zeros_like(one)
            return one, z, z, z, z, z
        s = self._sj
        return (s.ev(t, y), s.ev(t, y, dx=1), s.ev(t, y, dy=1), s.ev(t, y, dy=2),
                s.ev(t, y, dx=1, dy=1), s.ev(t, y, dx=2))

    def g11_inverse(self, t, y):
        """``g^{11}`` (the dt-dt inverse metric entry)."""
        return 1.0 / self.sqrt_G(t, y) ** 2

    def inverse_map(self, x, iterations: int = 30):
        """Return (t, y) for chart points inside the tube (Newton refined)."""
        x = np.asarray(x, dtype=float)
        if self.flat:
            d = x - self._origin
            return d @ self._tangent, d @ self._normal
        shape = x.shape[:-1]
        pts = x.reshape(-1, 2)
        _, idx = self._tree.query(pts)
        t = self._tree_ty[idx, 0].copy()
        y = self._tree_ty[idx, 1].copy()
        for _ in range(iterations):
            r = self.map(t, y) - pts
            J = self.jacobian(t, y)
            det = J[:, 0, 0] * J[:, 1, 1] - J[:, 0, 1] * J[:, 1, 0]
            dt = (J[:, 1, 1] * r[:, 0] - J[:, 0, 1] * r[:, 1]) / det
            dy = (-J[:, 1, 0] * r[:, 0] + J[:, 0, 0] * r[:, 1]) / det
            t -= dt
            y -= dy
            if np.max(np.abs(dt) + np.abs(dy)) < 1e-14:
                break
        return t.reshape(shape), y.reshape(shape)


def _shoot_normals(geom, starts, normals, ys):
    """Integrate normal geodesics plus the scalar Jacobi equation.

    Returns positions (n_t, n_y, 2) and Jacobi values (n_t, n_y) at the
    requested (monotone, starting at 0) offsets ``ys``.
    """
    n = len(starts)
    state = np.concatenate([starts, normals], -1)
    jac = np.ones(n)
    djac = np.zeros(n)
    pos = np.empty((n, len(ys), 2))
    jv = np.empty((n, len(ys)))
    pos[:, 0], jv[:, 0] = starts, 1.0
    substeps = 8
    for k in range(1, len(ys)):
        h = (ys[k] - ys[k - 1]) / substeps
        for _ in range(substeps):
            def rhs(s, j, dj):
                ds = _geodesic_rhs(geom, s)
                K = geom.gaussian_curvature(s[:, :2])
                return ds, dj, -K * j
            s1, j1, d1 = rhs(state, jac, djac)
            s2, j2, d2 = rhs(state + 0.5 * h * s1, jac + 0.5 * h * j1, djac + 0.5 * h * d1)
            s3, j3, d3 = rhs(state + 0.5 * h * s2, jac + 0.5 * h * j2, djac + 0.5 * h * d2)
            s4, j4, d4 = rhs(state + h * s3, jac + h * j3, djac + h * d3)
            state = state + h / 6 * (s1 + 2 * s2 + 2 * s3 + s4)
            jac = jac + h / 6 * (j1 + 2 * j2 + 2 * j3 + j4)
            djac = djac + h / 6 * (d1 + 2 * d2 + 2 * d3 + d4)
        pos[:, k], jv[:, k] = state[:, :2], jac
    return pos, jv


def fermi_frame(geom: TransversalGeometry, geo: Geodesic, tube_radius: float,
                t_stride: int = 10, n_y: int = 33) -> FermiChart:
    """Fermi coordinates along ``geo`` in a tube of the given radius."""
    if not geo.nontangential:
        raise GeometryError("Fermi coordinates need a nontangential geodesic")
    if tube_radius <= 0:
        raise GeometryError("tube radius must be positive")
    if geom.is_flat:
        origin = geo.point(0.0)
        tangent = geo.velocity(0.0)
        normal = np.array([-tangent[1], tangent[0]])
        return FermiChart(geo, tube_radius, True, origin, tangent, normal)
    idx = np.arange(0, len(geo.t), t_stride)
    if idx[-1] != len(geo.t) - 1:
        idx = np.append(idx, len(geo.t) - 1)
    ts = geo.t[idx]
    starts = geo.x[idx]
    normals = geom.unit_normal(starts, geo.v[idx])
    reach = 1.25 * tube_radius
    ys_pos = np.linspace(0.0, reach, n_y)
    pos_p, j_p = _shoot_normals(geom, starts, normals, ys_pos)
    pos_m, j_m = _shoot_normals(geom, starts, -normals, ys_pos)
    ys = np.concatenate([-ys_pos[:0:-1], ys_pos])
    pos = np.concatenate([pos_m[:, :0:-1], pos_p], axis=1)
    jv = np.concatenate([j_m[:, :0:-1], j_p], axis=1)
    if np.min(jv) <= 0.05:
        raise TubeOverlapError("normal geodesics focus inside the tube; shrink the radius")
    sx = RectBivariateSpline(ts, ys, pos[..., 0], kx=5, ky=5)
    sy = RectBivariateSpline(ts, ys, pos[..., 1], kx=5, ky=5)
    sj = RectBivariateSpline(ts, ys, jv, kx=5, ky=5)
    core = np.abs(ys) <= tube_radius
    TT, YY = np.meshgrid(ts, ys, indexing="ij")
    tree = cKDTree(pos.reshape(-1, 2))
    chart = FermiChart(geo, tube_radius, False, None, None, None, sx, sy, sj, tree,
                       np.stack([TT.ravel(), YY.ravel()], -1))
    # injectivity: distinct (t, y) cells must not map onto each other
    J = chart.jacobian(TT[:, core], YY[:, core])
    det = J[..., 0, 0] * J[..., 1, 1] - J[..., 0, 1] * J[..., 1, 0]
    if np.min(det) <= 0.0:
        raise TubeOverlapError("Fermi map degenerates in the tube; shrink the radius")
    return chart


def fit_order(h, err) -> float:
    """Least-squares slope of log(err) against log(h)."""
    h = np.asarray(h, dtype=float)
    err = np.asarray(err, dtype=float)
    return float(np.polyfit(np.log(h), np.log(err), 1)[0])
