"""Direction schemes whose lifted vectors sum to zero, and the coefficients they produce.

Run: python3 demos/03_schemes.py
"""

from itertools import combinations

from cta_lab.vectors import (
    build_xi_scheme,
    build_zeta_scheme,
    coefficient_E,
    coupling_C,
    coupling_D,
    fitted_order,
    verify_scheme,
)

print("1. The four-direction scheme at delta = 0.1. Lifts are lightlike and close to zero.")
xi = build_xi_scheme(delta=0.1)
rep = verify_scheme(xi)
print(f"   max lightlike residual {rep.lightlike.max():.1e}, closure {rep.closure:.1e}")
for i, k in combinations(range(1, 5), 2):
    print(f"   C{i}{k} = {coupling_C(xi, i, k):+.7f}")

print("\n2. The five-direction scheme. Triples and their complementary pairs have equal couplings.")
zeta = build_zeta_scheme(delta=0.1)
for c in [(1, 2, 3), (1, 3, 5), (2, 4, 5)]:
    rest = tuple(j for j in range(1, 6) if j not in c)
    print(f"   D{''.join(map(str, c))} = {coupling_D(zeta, *c, check=False):+.8f}   "
          f"D{''.join(map(str, rest))} = {coupling_D(zeta, *rest):+.8f}")

print("\n3. Behaviour as delta -> 0.")
deltas = [0.1, 0.05, 0.025, 0.0125, 0.00625, 0.003125]
rows = {d: (build_xi_scheme(delta=d), build_zeta_scheme(delta=d)) for d in deltas}
print("   delta      D12      C12+4      D15+8-delta   D24         delta^3 E")
for d, (x, z) in rows.items():
    print(f"   {d:<9g} {coupling_D(z, 1, 2):.5f}  {coupling_C(x, 1, 2) + 4:+.2e}  "
          f"{coupling_D(z, 1, 5) + 8 - d:+.2e}     {coupling_D(z, 2, 4):+.2e}   "
          f"{d**3 * coefficient_E(z):+.5f}")
print(f"   fitted orders: C12+4 {fitted_order(deltas, [coupling_C(x, 1, 2) + 4 for x, _ in rows.values()]):.2f}, "
      f"D15+8-delta {fitted_order(deltas, [coupling_D(z, 1, 5) + 8 - d for d, (_, z) in rows.items()]):.2f}, "
      f"D24 {fitted_order(deltas, [coupling_D(z, 2, 4) for _, z in rows.values()]):.2f}")
print("   delta^3 E settles near -0.031; the last dyadic step changes it by about 2%.")
print("   D15 and D25 are equal because the fifth direction is symmetric in the first two.")
