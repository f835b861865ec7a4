"""Walk through the symbol and the heat kernel for w(x) = ||x||**3 on Q_3.

Run:  python demos/symbol_and_kernel.py
"""
from padicwalk.heatkernel import HeatKernelModel
from padicwalk.landscape import PowerLaw
from padicwalk.symbol import SymbolTable, aw_oracle, aw_shifted_variant

L = PowerLaw(3, 1, 1.0, 2.0)
table = SymbolTable(L, -3, 3)

print("symbol A_w(3**-g)")
for g in table.gammas:
    print(f"  g={g:+d}  table={table.aw(g):.15g}  shell integral={aw_oracle(L, int(g)):.15g}")
print(f"13/108 = {13 / 108:.15g}; the variant whose leading term is short by p**n gives {aw_shifted_variant(L, 0):.15g} (5/108)")

# the kernel itself: both series, and the Z(x,t) ~ kappa t / w(x) regime for large ||x||
M = HeatKernelModel(L, 1.0)
print("\nZ(3**b, t)")
print("   b " + "".join(f"{t:>14g}" for t in (0.01, 1.0, 100.0)))
for b in (None, 0, 1, 2, 5, 10):
    row = [M.z_density(b, t) for t in (0.01, 1.0, 100.0)]
    label = "  0 " if b is None else f"{b:4d}"
    print(label + "".join(f"{z:14.6e}" for z in row))

for t in (0.01, 1.0):
    ratio = M.z_density_checked(5, t) * 3.0 ** (5 * 3) / t
    print(f"t={t}: Z(3**5) * ||x||**3 / t = {ratio:.6f}")

print("\nsurvival in Z_3: S(t)")
for t in (0.0, 0.5, 2.0, 10.0, 100.0):
    print(f"  S({t:g}) = {M.survival_S(t):.6f}")
