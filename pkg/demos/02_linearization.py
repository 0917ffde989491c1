"""The DN map of a semilinear equation and its higher-order linearizations.

Run: python3 demos/02_linearization.py
"""

import numpy as np

from cta_lab.forward import (
    build_operator,
    check_zero_eigenvalue,
    dn_map,
    grid_field,
    smallness_radius,
)
from cta_lab.geometry import build_transversal
from cta_lab.linearization import (
    EpsFamily,
    SolverContext,
    build_hierarchy,
    identity_family,
    identity_residual,
    mixed_derivative,
    random_modes,
    smooth_boundary_data,
)

geom = build_transversal("flat-square")
q = "1 + 0.5*x1*y1"

print("1. Operator -Delta + V on a 16^3 grid of the unit cube, V = 1.")
op = build_operator(geom, 16, V="1")
print(f"   lowest Dirichlet eigenvalue {check_zero_eigenvalue(op):.3f} (continuum 3 pi^2 + 1 = {3 * np.pi**2 + 1:.3f})")
r = smallness_radius(op, grid_field(op, q))
print(f"   data of size below {r:.4f} keep Newton in its contraction regime")

print("\n2. DN map of  (-Delta + V) u + q u^2 = 0  for boundary data 0.01 (1 + x1 y1).")
f = np.zeros(op.grid.size)
f[op.boundary] = grid_field(op, "0.01*(1 + x1*y1)")[op.boundary]
flux = dn_map(op, grid_field(op, q), f)
print(f"   flux range on the boundary: [{flux[op.boundary].min():.4e}, {flux[op.boundary].max():.4e}]")

print("\n3. Mixed derivatives in (eps1, eps2, eps3) of the solution for f = sum eps_k f_k.")
fam = EpsFamily([smooth_boundary_data(op, s) for s in range(3)])
ctx = SolverContext(op, q, jobs=2)
hier = build_hierarchy(op, q, fam, 3, jobs=2)
for order, direct in ((2, hier.w2[(0, 1)]), (3, hier.w3[(0, 1, 2)])):
    idx = tuple(range(order))
    for rich in (False, True):
        est = mixed_derivative(ctx, fam, idx, 0.5, scale=r, richardson=rich)
        err = np.linalg.norm(est - direct) / np.linalg.norm(direct)
        print(f"   order {order}, {'Richardson' if rich else 'plain     '}: relative error vs direct solve {err:.2e}")

print("\n4. Integral identity: boundary pairing of DN derivatives = volume integral of (q1 - q2) products.")
modes = random_modes(5, 1.0, seed=1)
for n in (16, 31):
    op_n = build_operator(geom, n, V=1.0)
    fam_n = identity_family(op_n, modes, seed=0)
    rep = identity_residual(2, op_n, "0.5 + 0.3*x1 + 8*x1*(1-x1)*y1*(1-y1)*y2*(1-y2)", "0.5 + 0.3*x1",
                            modes, fam_n)
    print(f"   n={n:2d}: boundary {rep.boundary_side:.6f}, volume {rep.volume_side:.6f}, "
          f"relative discrepancy {rep.discrepancy:.2e}")
