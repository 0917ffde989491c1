"""Finite-volume discretisation of -Delta_g + V on [0,1] x M0 and the DN map.

The metric is dx1^2 + rho(x') (dy1^2 + dy2^2), so sqrt|g| g^-1 = diag(rho, 1, 1).
The stiffness matrix collects edge fluxes weighted by this tensor, the mass
matrix is the lumped dual-cell volume times rho. Both are symmetric, which
makes the discrete Green identity exact; the integral-identity checks rely
on that.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .expr import Expression, parse
from .geometry import TransversalGeometry, build_transversal

DIRECT_LIMIT = 8_000  # interior unknowns solved by sparse LU
KRYLOV_RTOL = 1e-13


class SolverError(RuntimeError):
    pass


class NewtonDivergence(SolverError):
    def __init__(self, message, residual):
        super().__init__(message)
        self.residual = residual


class EigenvalueProximity(SolverError):
    pass


def _field(value, X):
    """Evaluate a number, formula string, Expression or callable on grid coordinates."""
    if isinstance(value, np.ndarray):
        if value.size == X[0].size:
            return value.reshape(X[0].shape).astype(float)
        return np.broadcast_to(value, X[0].shape).astype(float)
    if isinstance(value, (int, float)):
        return np.full(X[0].shape, float(value))
    if isinstance(value, str):
        value = parse(value)
    if isinstance(value, Expression):
        return value(*X)
    return np.asarray(value(*X), dtype=float) + np.zeros(X[0].shape)


@dataclass
class Grid:
    n: tuple  # nodes per axis

    @property
    def h(self):
        return tuple(1.0 / (k - 1) for k in self.n)

    @property
    def axes(self):
        return tuple(np.linspace(0.0, 1.0, k) for k in self.n)

    @property
    def coords(self):
        return np.meshgrid(*self.axes, indexing="ij")

    @property
    def boundary(self) -> np.ndarray:
        m = np.zeros(self.n, bool)
        m[0, :, :] = m[-1, :, :] = True
        m[:, 0, :] = m[:, -1, :] = True
        m[:, :, 0] = m[:, :, -1] = True
        return m

    @property
    def size(self):
        return int(np.prod(self.n))


@dataclass
class DiscreteOperator:
    """Stiffness ``K`` and lumped mass ``M`` with V folded in as ``K + M V``."""

    grid: Grid
    geom: TransversalGeometry
    K: sp.csr_matrix
    mass: np.ndarray  # flattened lumped sqrt|g| volumes
    V: np.ndarray  # flattened
    area: np.ndarray  # flattened boundary dual areas (0 in the interior)
    rho: np.ndarray  # flattened metric factor
    _cache: dict = field(default_factory=dict, repr=False)

    @property
    def interior(self) -> np.ndarray:
        return ~self.grid.boundary.ravel()

    @property
    def boundary(self) -> np.ndarray:
        return self.grid.boundary.ravel()

    def apply(self, u, V=None):
        """K u + M V u on every node (full residual vector)."""
        V = self.V if V is None else V
        return self.K @ u + self.mass * V * u

    def laplacian(self, u):
        """Discrete Delta_g u on interior nodes (NaN on the boundary)."""
        out = -(self.K @ u) / self.mass
        out[self.boundary] = np.nan
        return out

    def system(self, diag_extra=None):
        """Interior block of K + M (V + extra) and the interior-to-boundary coupling."""
        I = self.interior
        B = self.boundary
        if "split" not in self._cache:
            Kc = self.K.tocsr()
            self._cache["split"] = (Kc[I][:, I].tocsc(), Kc[I][:, B].tocsc())
        KII, KIB = self._cache["split"]
        d = self.mass[I] * (self.V[I] + (0 if diag_extra is None else diag_extra[I]))
        return (KII + sp.diags(d)).tocsc(), KIB


def build_operator(geom: TransversalGeometry | None = None, n=32, V=0.0) -> DiscreteOperator:
    """Assemble the operator on an n^3 (or n1 x n2 x n3) node grid."""
    geom = geom or build_transversal("flat-square")
    if geom.is_disk:
        raise ValueError("the forward solver needs a square transversal chart")
    n = (n, n, n) if np.isscalar(n) else tuple(n)
    if min(n) < 4:
        raise ValueError("need at least 4 nodes per axis")
    grid = Grid(n)
    h1, h2, h3 = grid.h
    X = grid.coords
    idx = np.arange(grid.size).reshape(n)
    rho = np.ones(n) if geom.is_flat else geom.factor.value(X[1], X[2])

    # dual-cell extents: half cells at boundary nodes
    def dual(k, hk):
        w = np.full(k, hk)
        w[0] = w[-1] = hk / 2
        return w

    d1, d2, d3 = dual(n[0], h1), dual(n[1], h2), dual(n[2], h3)
    vol = d1[:, None, None] * d2[None, :, None] * d3[None, None, :]
    mass = (vol * rho).ravel()

    rows, cols, vals = [], [], []

    def edges(axis, weight):
        sl_a = [slice(None)] * 3
        sl_b = [slice(None)] * 3
        sl_a[axis] = slice(0, -1)
        sl_b[axis] = slice(1, None)
        a = idx[tuple(sl_a)].ravel()
        b = idx[tuple(sl_b)].ravel()
        w = weight.ravel()
        rows.extend([a, b, a, b])
        cols.extend([a, b, b, a])
        vals.extend([w, w, -w, -w])

    # x1 edges carry rho at the edge midpoint, face area d2*d3 over length h1
    rho_mid1 = 0.5 * (rho[:-1] + rho[1:])
    edges(0, rho_mid1 * (d2[None, :, None] * d3[None, None, :]) / h1)
    edges(1, np.ones((n[0], n[1] - 1, n[2])) * (d1[:, None, None] * d3[None, None, :]) / h2)
    edges(2, np.ones((n[0], n[1], n[2] - 1)) * (d1[:, None, None] * d2[None, :, None]) / h3)
    K = sp.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(grid.size,) * 2)

    # boundary dual areas with the induced surface element
    area = np.zeros(n)
    sq = np.sqrt(rho)
    face = d2[:, None] * d3[None, :]
    area[0] += rho[0] * face
    area[-1] += rho[-1] * face
    area[:, 0, :] += sq[:, 0, :] * d1[:, None] * d3[None, :]
    area[:, -1, :] += sq[:, -1, :] * d1[:, None] * d3[None, :]
    area[:, :, 0] += sq[:, :, 0] * d1[:, None] * d2[None, :]
    area[:, :, -1] += sq[:, :, -1] * d1[:, None] * d2[None, :]
    Vv = _field(V, X).ravel()
    return DiscreteOperator(grid, geom, K, mass, Vv, area.ravel(), rho.ravel())


def with_potential(op: DiscreteOperator, V) -> DiscreteOperator:
    return DiscreteOperator(op.grid, op.geom, op.K, op.mass, _field(V, op.grid.coords).ravel(), op.area, op.rho,
                            {"split": op._cache["split"]} if "split" in op._cache else {})


def grid_field(op: DiscreteOperator, value) -> np.ndarray:
    return _field(value, op.grid.coords).ravel()


# ---------------------------------------------------------------------------
# linear algebra


def _solve(A, b, x0=None):
    n = A.shape[0]
    if n <= DIRECT_LIMIT:
        return spla.splu(A).solve(b)
    d = A.diagonal()
    pre = spla.LinearOperator(A.shape, matvec=lambda x: x / d)
    x, info = spla.cg(A, b, x0=x0, rtol=KRYLOV_RTOL, atol=0.0, maxiter=20 * n, M=pre)
    if info != 0:
        # indefinite or stagnating systems: fall back to a direct factorisation
        try:
            return spla.splu(A).solve(b)
        except RuntimeError as exc:
            raise SolverError(f"linear solve failed: {exc}") from exc
    return x


def solve_linear_dirichlet(op: DiscreteOperator, f=None, source=None, V_eff=None) -> np.ndarray:
    """Solve (-Delta + V_eff) v = source with v = f on the boundary (full-grid vector)."""
    n = op.grid.size
    I, B = op.interior, op.boundary
    u = np.zeros(n)
    if f is not None:
        u[B] = np.asarray(f, dtype=float).ravel()[B] if np.size(f) == n else np.asarray(f, dtype=float)
    extra = None if V_eff is None else (np.asarray(V_eff, float) - op.V)
    A, KIB = op.system(extra)
    rhs = -(KIB @ u[B])
    if source is not None:
        rhs = rhs + op.mass[I] * np.asarray(source, float).ravel()[I]
    u[I] = _solve(A, rhs)
    return u


def _power(u, m):
    return u**m if m != 2 else u * u


@dataclass
class SemilinearSolution:
    u: np.ndarray
    iterations: int
    residual: float
    stability: float  # ||u||_inf / ||f||_inf


def semilinear_residual(op: DiscreteOperator, q, u, m: int = 2) -> np.ndarray:
    r = (op.K @ u + op.mass * (op.V * u + q * _power(u, m))) / op.mass
    return r[op.interior]


def solve_semilinear(op: DiscreteOperator, q, f, newton_tol: float = 1e-10, m: int = 2, max_iter: int = 30,
                     max_halvings: int = 8) -> SemilinearSolution:
    """Newton iteration for (-Delta + V) u + q u^m = 0, u = f on the boundary."""
    q = grid_field(op, q) if not isinstance(q, np.ndarray) or q.size != op.grid.size else q.ravel()
    n = op.grid.size
    I, B = op.interior, op.boundary
    fb = np.asarray(f, float).ravel()
    fb = fb[B] if fb.size == n else fb
    fnorm = float(np.max(np.abs(fb))) if fb.size else 0.0
    if fnorm == 0.0:
        return SemilinearSolution(np.zeros(n), 0, 0.0, 0.0)
    full = np.zeros(n)
    full[B] = fb
    u = solve_linear_dirichlet(op, full)
    res = semilinear_residual(op, q, u, m)
    rnorm = float(np.max(np.abs(res)))
    it = 0
    while rnorm > newton_tol:
        if it >= max_iter:
            raise NewtonDivergence(f"Newton stalled at residual {rnorm:.3e}", rnorm)
        it += 1
        jac_extra = m * q * _power(u, m - 1) if m > 1 else q
        A, _ = op.system(jac_extra)
        du = _solve(A, -op.mass[I] * res)
        step = 1.0
        for _ in range(max_halvings + 1):
            trial = u.copy()
            trial[I] += step * du
            tres = semilinear_residual(op, q, trial, m)
            tn = float(np.max(np.abs(tres)))
            if tn < rnorm or tn <= newton_tol:
                break
            step *= 0.5
        else:
            raise NewtonDivergence(f"Newton diverged; last residual {rnorm:.3e} (data too large?)", rnorm)
        if tn >= rnorm and tn > newton_tol:
            break
        u, res, rnorm = trial, tres, tn
    return SemilinearSolution(u, it, rnorm, float(np.max(np.abs(u)) / fnorm))


def polish_newton(op, q, u, m=2, steps=2):
    """Extra Newton steps past the tolerance, to the roundoff floor."""
    q = grid_field(op, q) if not isinstance(q, np.ndarray) else q.ravel()
    I = op.interior
    for _ in range(steps):
        res = semilinear_residual(op, q, u, m)
        A, _ = op.system(m * q * _power(u, m - 1))
        u = u.copy()
        u[I] += _solve(A, -op.mass[I] * res)
    return u


# ---------------------------------------------------------------------------
# DN map


def boundary_flux(op: DiscreteOperator, u, q=None, m: int = 2, source=None) -> np.ndarray:
    """Variational Neumann data: residual at boundary nodes divided by the dual area.

    For the linear equation with a volume source ``(-Delta + V) u = s`` pass
    ``source=s``; the source is then moved to the left-hand side.
    """
    r = op.K @ u + op.mass * op.V * u
    if q is not None:
        qv = grid_field(op, q) if not isinstance(q, np.ndarray) else q.ravel()
        r = r + op.mass * qv * _power(u, m)
    if source is not None:
        r = r - op.mass * np.asarray(source, float).ravel()
    out = np.zeros_like(r)
    B = op.boundary
    out[B] = r[B] / op.area[B]
    return out


def boundary_residual(op: DiscreteOperator, u, q=None, m: int = 2, source=None) -> np.ndarray:
    """Boundary rows of the weak residual (flux times area)."""
    return boundary_flux(op, u, q, m, source) * op.area


def dn_map(op: DiscreteOperator, q, f, newton_tol: float = 1e-10, m: int = 2) -> np.ndarray:
    sol = solve_semilinear(op, q, f, newton_tol, m)
    return boundary_flux(op, sol.u, q, m)


def normal_difference_flux(op: DiscreteOperator, u) -> np.ndarray:
    """One-sided second-order normal derivative on face-interior boundary nodes."""
    n = op.grid.n
    U = u.reshape(n)
    rho = op.rho.reshape(n)
    out = np.full(n, np.nan)
    h1, h2, h3 = op.grid.h
    out[0] = -(-3 * U[0] + 4 * U[1] - U[2]) / (2 * h1)
    out[-1] = (3 * U[-1] - 4 * U[-2] + U[-3]) / (2 * h1)
    out[:, 0] = -(-3 * U[:, 0] + 4 * U[:, 1] - U[:, 2]) / (2 * h2) / np.sqrt(rho[:, 0])
    out[:, -1] = (3 * U[:, -1] - 4 * U[:, -2] + U[:, -3]) / (2 * h2) / np.sqrt(rho[:, -1])
    out[:, :, 0] = -(-3 * U[:, :, 0] + 4 * U[:, :, 1] - U[:, :, 2]) / (2 * h3) / np.sqrt(rho[:, :, 0])
    out[:, :, -1] = (3 * U[:, :, -1] - 4 * U[:, :, -2] + U[:, :, -3]) / (2 * h3) / np.sqrt(rho[:, :, -1])
    return out.ravel()


def face_interior_mask(grid: Grid) -> np.ndarray:
    """Boundary nodes lying on exactly one face."""
    n = grid.n
    count = np.zeros(n, int)
    count[0] += 1
    count[-1] += 1
    count[:, 0] += 1
    count[:, -1] += 1
    count[:, :, 0] += 1
    count[:, :, -1] += 1
    return (count == 1).ravel()


def faces(op: DiscreteOperator, values) -> dict:
    """Split a full-grid boundary vector into its six faces."""
    U = np.asarray(values).reshape(op.grid.n)
    return {"x1=0": U[0], "x1=1": U[-1], "y1=0": U[:, 0], "y1=1": U[:, -1], "y2=0": U[:, :, 0], "y2=1": U[:, :, -1]}


# ---------------------------------------------------------------------------
# spectrum, reduction


def check_zero_eigenvalue(op: DiscreteOperator) -> float:
    """Smallest-magnitude Dirichlet eigenvalue of (-Delta + V) by shift-invert Lanczos."""
    A, _ = op.system()
    s = 1.0 / np.sqrt(op.mass[op.interior])
    S = sp.diags(s)
    B = (S @ A @ S).tocsc()
    shift = -1e-8 * (1 + abs(B.diagonal()).max())
    shifted = (B - shift * sp.identity(B.shape[0])).tocsc()
    inv = spla.LinearOperator(B.shape, matvec=lambda x: _solve(shifted, np.ravel(x)))
    vals = spla.eigsh(B, k=1, sigma=shift, which="LM", OPinv=inv, return_eigenvectors=False, tol=1e-10,
                      v0=np.ones(B.shape[0]))
    return float(vals[0])


def smallness_radius(op: DiscreteOperator, q, cap: float = 0.05) -> float:
    qv = grid_field(op, q)
    qmax = float(np.max(np.abs(qv)))
    margin = abs(check_zero_eigenvalue(op))
    if qmax == 0:
        return cap
    return float(min(cap, 0.05 * margin / qmax))


@dataclass
class ReducedCoefficients:
    V: np.ndarray
    q: np.ndarray
    scale: np.ndarray  # c^{1/4}, multiply reduced solutions by c^{-1/4} to undo


def conformal_reduce(op: DiscreteOperator, c, V=0.0, q=0.0) -> ReducedCoefficients:
    """V_hat = c V - c^{1/4} Delta_g c^{-1/4}, q_hat = c^{-1/2} q for n = 3.

    The curvature term on boundary nodes is extrapolated linearly along the
    inward normal of the nearest face.
    """
    X = op.grid.coords
    cv = _field(c, X).ravel()
    if np.any(cv <= 0):
        raise ValueError("conformal factor must be positive on the grid")
    Vv = _field(V, X).ravel()
    qv = _field(q, X).ravel()
    w = cv ** (-0.25)
    lap = op.laplacian(w)
    curv = -cv**0.25 * lap
    curv = _fill_boundary(curv.reshape(op.grid.n)).ravel()
    if np.ptp(cv) == 0.0:
        curv[:] = 0.0
    return ReducedCoefficients(cv * Vv + curv, cv**-0.5 * qv, cv**0.25)


def _fill_boundary(F):
    F = F.copy()
    for ax in range(3):
        for end, a, b in ((0, 1, 2), (-1, -2, -3)):
            sl = [slice(1, -1)] * 3
            s0, sa, sb = list(sl), list(sl), list(sl)
            s0[ax], sa[ax], sb[ax] = end, a, b
            F[tuple(s0)] = 2 * F[tuple(sa)] - F[tuple(sb)]
    # edges and corners: copy the nearest face-interior value
    bad = ~np.isfinite(F)
    if bad.any():
        idx = np.nonzero(bad)
        src = tuple(np.clip(k, 1, n - 2) for k, n in zip(idx, F.shape))
        F[idx] = F[src]
    return F


# ---------------------------------------------------------------------------
# identification


def content_hash(*parts) -> str:
    h = hashlib.sha256()
    for p in parts:
        if isinstance(p, np.ndarray):
            h.update(np.ascontiguousarray(p).tobytes())
            h.update(str(p.shape).encode())
        else:
            h.update(repr(p).encode())
        h.update(b"|")
    return h.hexdigest()[:16]


def operator_key(op: DiscreteOperator) -> str:
    g = op.geom
    phi = None if g.factor.phi is None else g.factor.phi.source
    return content_hash(g.kind, g.factor.epsilon, phi, op.grid.n, op.V)
