"""Higher-order linearization: epsilon families, FD mixed derivatives, direct
linearized hierarchies and the integral identities tying them to the DN map."""

from __future__ import annotations

import itertools
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import RegularGridInterpolator

from .forward import (
    DiscreteOperator,
    SolverError,
    boundary_residual,
    grid_field,
    polish_newton,
    solve_linear_dirichlet,
    solve_semilinear,
)
from .quasimode import _gl

DEFAULT_STEPS = {1: 1e-2, 2: 1e-2, 3: 2e-2, 4: 3e-2}


@dataclass
class EpsFamily:
    """f_eps = sum eps_i f_i + sum_{i<j} eps_i eps_j f_ij + sum_{i<j<k} eps_i eps_j eps_k f_ijk."""

    first: list
    second: dict = field(default_factory=dict)
    third: dict = field(default_factory=dict)

    def __call__(self, eps) -> np.ndarray:
        eps = np.asarray(eps, dtype=float)
        out = sum(e * f for e, f in zip(eps, self.first))
        for (i, j), f in self.second.items():
            out = out + eps[i] * eps[j] * f
        for (i, j, k), f in self.third.items():
            out = out + eps[i] * eps[j] * eps[k] * f
        return np.asarray(out, dtype=float)

    def pair(self, i, j):
        return self.second.get(tuple(sorted((i, j))))

    def triple(self, i, j, k):
        return self.third.get(tuple(sorted((i, j, k))))


@dataclass
class SolverContext:
    op: DiscreteOperator
    q: object
    newton_tol: float = 1e-13
    m: int = 2
    jobs: int = 1

    @property
    def qv(self) -> np.ndarray:
        return grid_field(self.op, self.q)

    def solve(self, f):
        try:
            sol = solve_semilinear(self.op, self.qv, f, self.newton_tol, self.m)
        except SolverError as exc:
            raise SolverError(f"semilinear solve failed: {exc}") from exc
        return polish_newton(self.op, self.qv, sol.u, self.m, steps=1) if sol.iterations else sol.u

    def dn_residual(self, u):
        return boundary_residual(self.op, u, self.qv, self.m)


def mixed_derivative(ctx: SolverContext, family: EpsFamily, index, h: float, output: str = "solution",
                     scale: float = 1.0, richardson: bool = False) -> np.ndarray:
    """Central 2^k-point estimate of d^k/d eps_index of u_{f_eps} (or its DN data).

    ``h`` is relative to ``scale`` (the smallness radius); the actual step is
    ``h * scale``. DN output is the boundary flux (zero in the interior).
    """
    if richardson:
        d1 = mixed_derivative(ctx, family, index, h, output, scale)
        d2 = mixed_derivative(ctx, family, index, h / 2, output, scale)
        return (4 * d2 - d1) / 3
    index = tuple(index)
    k = len(index)
    step = h * scale
    n = len(family.first)
    nodes = []
    for signs in itertools.product((1, -1), repeat=k):
        eps = np.zeros(n)
        for s, i in zip(signs, index):
            eps[i] += s * step
        nodes.append((np.prod(signs), eps))

    def run(item):
        weight, eps = item
        try:
            u = ctx.solve(family(eps))
        except SolverError as exc:
            raise SolverError(f"solve failed at eps={eps.tolist()}: {exc}") from exc
        if output == "dn":
            r = ctx.dn_residual(u)
            out = np.zeros_like(r)
            B = ctx.op.boundary
            out[B] = r[B] / ctx.op.area[B]
            return weight * out
        return weight * u

    if ctx.jobs > 1:
        with ThreadPoolExecutor(ctx.jobs) as ex:
            parts = list(ex.map(run, nodes))
    else:
        parts = [run(it) for it in nodes]
    return sum(parts) / (2 * step) ** k


# ---------------------------------------------------------------------------
# direct hierarchies (quadratic nonlinearity)


def _full(op, f):
    if f is None:
        return None
    f = np.asarray(f, float).ravel()
    if f.size == op.grid.size:
        return f
    out = np.zeros(op.grid.size)
    out[op.boundary] = f
    return out


def direct_first(op, f):
    return solve_linear_dirichlet(op, _full(op, f))


def direct_second_linearized(op, q, v_i, v_j, f_ij=None):
    qv = grid_field(op, q)
    return solve_linear_dirichlet(op, _full(op, f_ij), source=-2 * qv * v_i * v_j)


def third_source(q, v, w, i, j, k):
    return -2 * q * (v[i] * w[(j, k)] + v[j] * w[(i, k)] + v[k] * w[(i, j)])


def direct_third_linearized(op, q, v, w, idx, f_ijk=None):
    i, j, k = sorted(idx)
    qv = grid_field(op, q)
    return solve_linear_dirichlet(op, _full(op, f_ijk), source=third_source(qv, v, w, i, j, k))


def fourth_source(q, v, w2, w3):
    s = v[0] * w3[(1, 2, 3)] + v[1] * w3[(0, 2, 3)] + v[2] * w3[(0, 1, 3)] + v[3] * w3[(0, 1, 2)]
    s = s + w2[(0, 1)] * w2[(2, 3)] + w2[(0, 2)] * w2[(1, 3)] + w2[(0, 3)] * w2[(1, 2)]
    return -2 * q * s


def direct_fourth_linearized(op, q, v, w2, w3):
    qv = grid_field(op, q)
    return solve_linear_dirichlet(op, None, source=fourth_source(qv, v, w2, w3))


@dataclass
class Hierarchy:
    """Direct linearized solutions and their boundary residual rows."""

    v: dict
    w2: dict
    w3: dict
    w4: np.ndarray | None
    flux2: dict
    flux3: dict
    flux4: np.ndarray | None


def build_hierarchy(op, q, family: EpsFamily, order: int, v: dict | None = None, jobs: int = 1) -> Hierarchy:
    """Solve the linearized hierarchy up to ``order`` (first four data only for w's)."""
    qv = grid_field(op, q)
    n = len(family.first)
    if v is None:
        v = {i: direct_first(op, family.first[i]) for i in range(n)}
    idx4 = range(min(n, 4))
    w2, w3, f2, f3 = {}, {}, {}, {}
    flux4 = w4 = None

    def pmap(fn, items):
        if jobs > 1:
            with ThreadPoolExecutor(jobs) as ex:
                return list(ex.map(fn, items))
        return [fn(x) for x in items]

    if order >= 2:
        pairs = list(itertools.combinations(idx4, 2))
        sols = pmap(lambda p: direct_second_linearized(op, qv, v[p[0]], v[p[1]], family.pair(*p)), pairs)
        for p, s in zip(pairs, sols):
            w2[p] = s
            f2[p] = boundary_residual(op, s, source=-2 * qv * v[p[0]] * v[p[1]])
    if order >= 3:
        triples = list(itertools.combinations(idx4, 3))
        sols = pmap(lambda t: direct_third_linearized(op, qv, v, w2, t, family.triple(*t)), triples)
        for t, s in zip(triples, sols):
            w3[t] = s
            f3[t] = boundary_residual(op, s, source=third_source(qv, v, w2, *t))
    if order >= 4:
        w4 = direct_fourth_linearized(op, qv, v, w2, w3)
        flux4 = boundary_residual(op, w4, source=fourth_source(qv, v, w2, w3))
    return Hierarchy(v, w2, w3, w4, f2, f3, flux4)


# ---------------------------------------------------------------------------
# integral identities


@dataclass
class IdentityReport:
    order: int
    boundary_side: float
    volume_side: float
    discrepancy: float
    grid: int

    def row(self, h=None):
        return {"order": self.order, "grid": self.grid, "h": h if h is not None else 1.0 / (self.grid - 1),
                "lhs": self.boundary_side, "rhs": self.volume_side, "rel_discrepancy": self.discrepancy}


@dataclass(frozen=True)
class ExpMode:
    """exp(a x1) cos(b y1 + p) cos(c y2 + r) with a^2 = b^2 + c^2 + V (solves -Delta u + V u = 0)."""

    b: float
    c: float
    p: float
    r: float
    V: float
    amp: float = 1.0

    @property
    def a(self):
        return float(np.sqrt(self.b**2 + self.c**2 + self.V))

    def __call__(self, x1, y1, y2):
        return self.amp * np.exp(self.a * (x1 - 0.5)) * np.cos(self.b * y1 + self.p) * np.cos(self.c * y2 + self.r)


def random_modes(count: int, V: float, seed: int = 0, kmax: float = 3.0):
    rng = np.random.default_rng(seed)
    out = []
    for _ in range(count):
        b, c = rng.uniform(0.5, kmax, 2)
        p, r = rng.uniform(0, np.pi, 2)
        out.append(ExpMode(float(b), float(c), float(p), float(r), float(V)))
    return out


def smooth_boundary_data(op, seed: int, amp: float = 0.3):
    """Trace of a random low-degree polynomial, shared second/third order data."""
    rng = np.random.default_rng(seed)
    c = rng.normal(size=4) * amp
    X = op.grid.coords
    f = c[0] + c[1] * X[0] + c[2] * X[1] * X[2] + c[3] * X[0] * X[1]
    out = np.zeros(op.grid.size)
    out[op.boundary] = f.ravel()[op.boundary]
    return out


def identity_family(op, modes, seed: int = 0, shared: bool = True) -> EpsFamily:
    X = op.grid.coords
    first = []
    for m in modes:
        f = np.zeros(op.grid.size)
        f[op.boundary] = m(*X).ravel()[op.boundary]
        first.append(f)
    k = min(len(modes), 4)
    second, third = {}, {}
    if shared:
        for t, p in enumerate(itertools.combinations(range(k), 2)):
            second[p] = smooth_boundary_data(op, seed + 100 + t)
        for t, p in enumerate(itertools.combinations(range(k), 3)):
            third[p] = smooth_boundary_data(op, seed + 200 + t)
    return EpsFamily(first, second, third)


class _Volume:
    """Two-point Gauss-Legendre per grid cell with trilinear interpolation of grid fields."""

    def __init__(self, op: DiscreteOperator, sub: int = 2):
        self.op = op
        axes = op.grid.axes
        pts, wts = [], []
        for ax in axes:
            xs, ws = [], []
            for a, b in zip(ax[:-1], ax[1:]):
                x, w = _gl(a, b, sub)
                xs.append(x)
                ws.append(w)
            pts.append(np.concatenate(xs))
            wts.append(np.concatenate(ws))
        self.axes = axes
        self.X = np.meshgrid(*pts, indexing="ij")
        W = wts[0][:, None, None] * wts[1][None, :, None] * wts[2][None, None, :]
        rho = np.ones_like(W) if op.geom.is_flat else op.geom.factor.value(self.X[1], self.X[2])
        self.W = W * rho
        self._pts = np.stack([x.ravel() for x in self.X], -1)

    def interp(self, u):
        f = RegularGridInterpolator(self.axes, np.asarray(u).reshape(self.op.grid.n), method="linear")
        return f(self._pts).reshape(self.X[0].shape)

    def integrate(self, F):
        return float(np.sum(self.W * F))


def _discrepancy(lhs, rhs, floor):
    return float(abs(lhs - rhs) / max(abs(rhs), floor))


def identity_residual(order: int, op: DiscreteOperator, q1, q2, modes, family: EpsFamily | None = None,
                      hier1: Hierarchy | None = None, hier2: Hierarchy | None = None, jobs: int = 1,
                      exact_v: bool = True) -> IdentityReport:
    """Compare the boundary side of the identity with its volume side.

    ``modes`` are closed-form solutions of the linear equation (constant V);
    their traces are the first-order data, and with ``exact_v`` the volume
    side uses them instead of the discrete solutions.
    """
    if order not in (2, 3, 4):
        raise ValueError("order must be 2, 3 or 4")
    need = {2: 3, 3: 4, 4: 5}[order]
    if len(modes) < need:
        raise ValueError(f"order {order} needs {need} first-order data")
    family = family or identity_family(op, modes)
    v = {i: direct_first(op, family.first[i]) for i in range(len(modes))}
    hier1 = hier1 or build_hierarchy(op, q1, family, order, v, jobs)
    hier2 = hier2 or build_hierarchy(op, q2, family, order, v, jobs)
    B = op.boundary
    vol = _Volume(op)
    Q1 = grid_field_at(q1, vol.X)
    Q2 = grid_field_at(q2, vol.X)
    V = (lambda i: modes[i](*vol.X)) if exact_v else (lambda i: vol.interp(v[i]))
    if order == 2:
        i, j, k = 0, 1, 2
        lhs = float(np.sum((hier1.flux2[(i, j)] - hier2.flux2[(i, j)])[B] * family.first[k][B]))
        rhs = 2 * vol.integrate((Q1 - Q2) * V(i) * V(j) * V(k))
    elif order == 3:
        i, j, k, m = 0, 1, 2, 3
        lhs = float(np.sum((hier1.flux3[(i, j, k)] - hier2.flux3[(i, j, k)])[B] * family.first[m][B]))
        W1 = {p: vol.interp(w) for p, w in hier1.w2.items()}
        W2 = {p: vol.interp(w) for p, w in hier2.w2.items()}
        Vi, Vj, Vk = V(i), V(j), V(k)
        s1 = Vi * W1[(j, k)] + Vj * W1[(i, k)] + Vk * W1[(i, j)]
        s2 = Vi * W2[(j, k)] + Vj * W2[(i, k)] + Vk * W2[(i, j)]
        rhs = 2 * vol.integrate((Q1 * s1 - Q2 * s2) * V(m))
    else:
        lhs = float(np.sum((hier1.flux4 - hier2.flux4)[B] * family.first[4][B]))
        vv = [V(t) for t in range(4)]

        def bracket(h):
            W2 = {p: vol.interp(w) for p, w in h.w2.items()}
            W3 = {p: vol.interp(w) for p, w in h.w3.items()}
            s = vv[0] * W3[(1, 2, 3)] + vv[1] * W3[(0, 2, 3)] + vv[2] * W3[(0, 1, 3)] + vv[3] * W3[(0, 1, 2)]
            return s + W2[(0, 1)] * W2[(2, 3)] + W2[(0, 2)] * W2[(1, 3)] + W2[(0, 3)] * W2[(1, 2)]

        rhs = 2 * vol.integrate((Q1 * bracket(hier1) - Q2 * bracket(hier2)) * V(4))
    qmax = float(max(np.max(np.abs(grid_field(op, q1))), np.max(np.abs(grid_field(op, q2)))))
    floor = 1e-12 * max(qmax, 1e-300)
    return IdentityReport(order, lhs, rhs, _discrepancy(lhs, rhs, floor), op.grid.n[0])


def grid_field_at(value, X):
    from .forward import _field

    return _field(value, X)


def fitted_order(hs, errs) -> float:
    return float(np.polyfit(np.log(hs), np.log(errs), 1)[0])
