"""Direction schemes at a base point and their coupling coefficients.

Two schemes are provided. The four-direction scheme starts from a unit
vector ``xi1`` and a second unit vector ``xi2`` with ``<xi1, xi2> = 1 - delta``;
two further vectors close the sum. The five-direction scheme rescales the
last two and adds a fifth vector along ``xi1 + xi2``.

Every tangent vector ``v`` is lifted to the complex vector
``(sigma |v|, i v)`` in ``C x T_p M0``, which is lightlike for the complex
bilinear form ``<a, b> = a0 b0 + g0(a', b')``. The coupling coefficients are
inner products of lifted vectors.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from itertools import combinations

import numpy as np

XI_SIGNS = (1, -1, 1, -1)
ZETA_SIGNS = (1, 1, 1, -1, -1)


class SchemeError(ValueError):
    pass


@dataclass
class DirectionScheme:
    kind: str
    delta: float
    p0: np.ndarray
    vectors: np.ndarray  # (k, 2) tangent vectors
    signs: tuple
    gram: np.ndarray  # g0(p0)
    geodesics: list = field(default_factory=list)

    @property
    def speeds(self) -> np.ndarray:
        return np.sqrt(np.einsum("ki,ij,kj->k", self.vectors, self.gram, self.vectors))

    @property
    def lifts(self) -> np.ndarray:
        """Lifted complex vectors, shape (k, 3)."""
        out = np.zeros((len(self.vectors), 3), complex)
        out[:, 0] = np.array(self.signs) * self.speeds
        out[:, 1:] = 1j * self.vectors
        return out

    def bilinear(self, a, b) -> complex:
        a = np.asarray(a)
        b = np.asarray(b)
        return complex(a[..., 0] * b[..., 0] + a[..., 1:] @ self.gram @ b[..., 1:])

    def unit_directions(self) -> np.ndarray:
        return self.vectors / self.speeds[:, None]


def _rotate_into(gram, v, angle, sense):
    """Rotate ``v`` by ``angle`` in the g-orthonormal frame at p0."""
    L = np.linalg.cholesky(gram)  # gram = L L^T
    w = L.T @ v
    c, s = np.cos(angle), sense * np.sin(angle)
    w2 = np.array([c * w[0] - s * w[1], s * w[0] + c * w[1]])
    return np.linalg.solve(L.T, w2)


def _base_pair(geom, p0, xi1, delta, sense):
    if not 0.0 < delta < 1.0:
        raise SchemeError(f"delta must lie in (0, 1); got {delta}")
    p0 = np.asarray(p0, dtype=float)
    gram = np.eye(2) if geom is None else geom.metric(p0)
    xi1 = np.asarray(xi1, dtype=float)
    xi1 = xi1 / np.sqrt(xi1 @ gram @ xi1)
    xi2 = _rotate_into(gram, xi1, np.arccos(1.0 - delta), sense)
    return p0, gram, xi1, xi2


def _check_independent(vectors, names, tol=1e-6):
    for i, j in combinations(range(len(vectors)), 2):
        a, b = vectors[i], vectors[j]
        det = a[0] * b[1] - a[1] * b[0]
        if abs(det) <= tol * np.linalg.norm(a) * np.linalg.norm(b):
            raise SchemeError(f"directions {names[i]} and {names[j]} are parallel")


def _trace_all(geom, scheme, step):
    from .geometry import trace_geodesic

    out = []
    for k, u in enumerate(scheme.unit_directions()):
        geo = trace_geodesic(geom, scheme.p0, u, step=step)
        if not geo.nontangential:
            raise SchemeError(f"geodesic {k + 1} of the {scheme.kind} scheme is tangential to the boundary")
        out.append(geo)
    scheme.geodesics = out


def build_xi_scheme(geom=None, p0=(0.5, 0.5), xi1=(1.0, 0.0), delta=0.1, sense: int = 1,
                    signs=XI_SIGNS, trace: bool = False, step: float = 1e-3) -> DirectionScheme:
    """Four directions closing to zero; ``sense`` picks the rotation of xi2."""
    p0, gram, a, b = _base_pair(geom, p0, xi1, delta, sense)
    xi3 = -(a + delta * b) / (1 + delta)
    xi4 = -(delta * a + b) / (1 + delta)
    vecs = np.array([a, b, xi3, xi4])
    _check_independent(vecs, ["xi1", "xi2", "xi3", "xi4"])
    scheme = DirectionScheme("xi4", float(delta), p0, vecs, tuple(signs), gram)
    if trace:
        _trace_all(geom, scheme, step)
    return scheme


def zeta_scale(delta: float) -> float:
    return float(np.sqrt(2.0 / (2.0 - delta)))


def build_zeta_scheme(geom=None, p0=(0.5, 0.5), xi1=(1.0, 0.0), delta=0.1, sense: int = 1,
                      signs=ZETA_SIGNS, trace: bool = False, step: float = 1e-3) -> DirectionScheme:
    """Five directions built from the four-direction scheme."""
    base = build_xi_scheme(geom, p0, xi1, delta, sense)
    s = zeta_scale(delta)
    a, b, c, d = base.vectors
    vecs = np.array([a, b, (1 + s) * c, (1 + s) * d, s * (a + b)])
    _check_independent(vecs, ["zeta1", "zeta2", "zeta3", "zeta4", "zeta5"])
    scheme = DirectionScheme("zeta5", float(delta), base.p0, vecs, tuple(signs), base.gram)
    if trace:
        _trace_all(geom, scheme, step)
    return scheme


# ---------------------------------------------------------------------------
# coefficients


def coupling_C(scheme: DirectionScheme, i: int, k: int) -> float:
    """2 <lift_i, lift_k> for 1-based indices."""
    if i == k:
        raise SchemeError("coupling_C needs distinct indices")
    L = scheme.lifts
    return float(np.real(2 * scheme.bilinear(L[i - 1], L[k - 1])))


def coupling_D(scheme: DirectionScheme, *idx: int, check: bool = True) -> float:
    """Squared norm of a sum of two or three lifted vectors (1-based)."""
    if len(set(idx)) != len(idx):
        raise SchemeError(f"repeated indices {idx}")
    if len(idx) not in (2, 3):
        raise SchemeError("coupling_D takes a pair or a triple")
    L = scheme.lifts
    total = sum(L[i - 1] for i in idx)
    direct = float(np.real(scheme.bilinear(total, total)))
    if len(idx) == 3 and check and len(L) == 5:
        rest = [j for j in range(1, 6) if j not in idx]
        other = coupling_D(scheme, *rest)
        if abs(direct - other) > 1e-10 * max(1.0, abs(direct)):
            raise SchemeError(f"complement identity failed for {idx}: {direct} vs {other}")
    return direct


def pair_coefficient_closed(scheme: DirectionScheme, i: int, j: int) -> float:
    """2 (sigma_i sigma_j c_i c_j - g0(v_i, v_j))."""
    c = scheme.speeds
    sg = scheme.signs[i - 1] * scheme.signs[j - 1]
    vi, vj = scheme.vectors[i - 1], scheme.vectors[j - 1]
    return float(2 * (sg * c[i - 1] * c[j - 1] - vi @ scheme.gram @ vj))


E_GROUPINGS = ("displayed", "recursion")


def coefficient_E(scheme: DirectionScheme, grouping: str = "displayed") -> float:
    """Leading coefficient of the fourth-order interaction.

    ``displayed`` pairs each 1/D_{l5} with the reciprocal of a sum of three
    pair coefficients; ``recursion`` uses the sum of reciprocals that the
    amplitude recursion produces.
    """
    if scheme.kind != "zeta5":
        raise SchemeError("coefficient_E needs the five-direction scheme")
    D = lambda a, b: coupling_D(scheme, a, b)
    total = 0.0
    for l in range(1, 5):
        i, j, k = [m for m in range(1, 5) if m != l]
        if grouping == "displayed":
            inner = 1.0 / (D(i, j) + D(i, k) + D(j, k))
        elif grouping == "recursion":
            inner = 1.0 / D(i, j) + 1.0 / D(i, k) + 1.0 / D(j, k)
        else:
            raise ValueError(f"grouping must be one of {E_GROUPINGS}")
        total += inner / D(l, 5)
    total += 1.0 / (D(1, 2) * D(3, 4)) + 1.0 / (D(1, 3) * D(2, 4)) + 1.0 / (D(1, 4) * D(2, 3))
    return float(total)


def E_terms(scheme: DirectionScheme, grouping: str = "displayed") -> dict:
    """Individual summands of ``coefficient_E`` keyed by a readable label."""
    D = lambda a, b: coupling_D(scheme, a, b)
    out = {}
    for l in range(1, 5):
        i, j, k = [m for m in range(1, 5) if m != l]
        if grouping == "displayed":
            inner = 1.0 / (D(i, j) + D(i, k) + D(j, k))
        else:
            inner = 1.0 / D(i, j) + 1.0 / D(i, k) + 1.0 / D(j, k)
        out[f"1/D{l}5 * [{i}{j}{k}]"] = inner / D(l, 5)
    out["1/(D12 D34)"] = 1.0 / (D(1, 2) * D(3, 4))
    out["1/(D13 D24)"] = 1.0 / (D(1, 3) * D(2, 4))
    out["1/(D14 D23)"] = 1.0 / (D(1, 4) * D(2, 3))
    return out


# ---------------------------------------------------------------------------
# verification


@dataclass
class SchemeReport:
    lightlike: np.ndarray
    closure: float
    min_independence: float
    min_three_sum: float
    eta_consistency: float
    passed: bool


def verify_scheme(scheme: DirectionScheme, seed: int = 0, n_pairs: int = 100) -> SchemeReport:
    L = scheme.lifts
    lightlike = np.array([abs(scheme.bilinear(v, v)) for v in L])
    closure = float(np.max(np.abs(L.sum(axis=0))))
    indep = min(
        abs(a[0] * b[1] - a[1] * b[0]) / (np.linalg.norm(a) * np.linalg.norm(b))
        for a, b in combinations(scheme.vectors, 2)
    )
    three = min(
        float(np.sqrt(np.sum(np.abs(sum(L[i] for i in c)) ** 2))) for c in combinations(range(len(L)), 3)
    )
    # Lorentzian form eta((a0, a'), (b0, b')) = -a0 b0 + g(a', b') evaluated on
    # real tangent data: lifting a real pair (a0, a') as (a0, i a') turns the
    # complex bilinear form into -eta.
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(n_pairs):
        a, b = rng.normal(size=3), rng.normal(size=3)
        eta = -a[0] * b[0] + a[1:] @ scheme.gram @ b[1:]
        la = np.concatenate([[a[0]], 1j * a[1:]])
        lb = np.concatenate([[b[0]], 1j * b[1:]])
        worst = max(worst, abs(eta + scheme.bilinear(la, lb)))
    passed = bool(np.max(lightlike) <= 1e-12 and closure <= 1e-12 and indep > 0 and three > 0 and worst <= 1e-12)
    return SchemeReport(lightlike, closure, float(indep), three, float(worst), passed)


def coupling_table(scheme: DirectionScheme) -> dict:
    """Every coefficient of the scheme keyed by name."""
    out = {}
    n = len(scheme.vectors)
    if scheme.kind == "xi4":
        for i, k in combinations(range(1, n + 1), 2):
            out[f"C{i}{k}"] = coupling_C(scheme, i, k)
        out["Csum_inv"] = 1 / out["C12"] + 1 / out["C13"] + 1 / out["C23"]
    else:
        for i, k in combinations(range(1, n + 1), 2):
            out[f"D{i}{k}"] = coupling_D(scheme, i, k)
        for c in combinations(range(1, n + 1), 3):
            out["D" + "".join(map(str, c))] = coupling_D(scheme, *c)
        out["E"] = coefficient_E(scheme, "displayed")
        out["E_recursion"] = coefficient_E(scheme, "recursion")
    return out


def sweep_rows(deltas, geom=None, p0=(0.5, 0.5), xi1=(1.0, 0.0), sense=1):
    """CSV rows (delta, name, value) over a delta sweep for both schemes."""
    rows = []
    for d in deltas:
        for build in (build_xi_scheme, build_zeta_scheme):
            sch = build(geom, p0, xi1, d, sense)
            for name, val in coupling_table(sch).items():
                rows.append({"delta": float(d), "name": name, "value": float(val)})
    return rows


def fitted_order(deltas, values) -> float:
    d = np.asarray(deltas, dtype=float)
    v = np.abs(np.asarray(values, dtype=float))
    return float(np.polyfit(np.log(d), np.log(v), 1)[0])
