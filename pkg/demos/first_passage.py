"""Return to Z_3 for a transient (w ~ r**1.5) and a recurrent (w ~ r**2.5) landscape.

Three routes are compared: the Monte Carlo return fraction, the mass of the
first-passage density from the Volterra equation, and 1 - 1/(1 + G(0)).

Run:  python demos/first_passage.py      (about a minute)
"""
from padicwalk.fpt import FptGrid, classify_recurrence, laplace_G, volterra_solve
from padicwalk.heatkernel import HeatKernelModel
from padicwalk.landscape import PowerLaw, kappa_admissible_max
from padicwalk.walker import WalkConfig, estimate_fpt, estimate_return_probability


def model(w_exponent):
    L = PowerLaw(3, 1, 1.0, w_exponent - 1)
    return HeatKernelModel(L, kappa_admissible_max(L), fpt=True)


M = model(1.5)
c = classify_recurrence(M)
print(f"w ~ r**1.5: {c.tag}, G(0) = {c.diagnostics['G0']:.6f}, return probability {c.return_probability:.5f}")
for T in (25.0, 100.0, 400.0):
    g = volterra_solve(FptGrid.from_model(M, 0.05, int(T / 0.05) + 1))
    print(f"   Volterra mass up to T={T:g}: {g.cumulative[-1]:.5f}")
for dt in (0.2, 0.05):
    p, ci = estimate_return_probability(WalkConfig(M, dt, 50.0, 50_000, seed=5))
    print(f"   walk dt={dt}: returned {p:.4f}  95% [{ci[0]:.4f}, {ci[1]:.4f}]   (coarse grids miss short excursions)")

R = model(2.5)
c = classify_recurrence(R)
print(f"\nw ~ r**2.5: {c.tag}; G(s) as s -> 0:")
for s in (1.0, 1e-1, 1e-2, 1e-3):
    print(f"   G({s:g}) = {laplace_G(R, s).value:.4f}")
g = volterra_solve(FptGrid.from_model(R, 0.1, 20001))
for T in (10, 100, 1000, 2000):
    print(f"   Volterra mass up to T={T}: {g.cumulative[int(T / 0.1)]:.4f}")
for T in (10.0, 40.0, 160.0):
    e = estimate_fpt(WalkConfig(R, 0.1, T, 20_000, seed=int(T)))
    print(f"   walk: not yet returned by T={T:g}: {e.censored_fraction:.4f}")
