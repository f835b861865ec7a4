"""Simulated walk against the analytic laws: increment radii and occupancy of Z_3.

Run:  python demos/walk_vs_theory.py
"""
import numpy as np

from padicwalk.heatkernel import HeatKernelModel
from padicwalk.landscape import PowerLaw
from padicwalk.walker import IncrementLaw, WalkConfig, path_rng, run_paths

M = HeatKernelModel(PowerLaw(3, 1, 1.0, 2.0), 1.0)

N = 100_000
for dt in (0.01, 0.1, 1.0):
    law = IncrementLaw.from_model(M, dt)
    b = np.sort(law.level_of(path_rng(1, 0).random(N)))
    print(f"dt={dt}: increment levels {law.levels[0]}..{law.levels[-1]}")
    for m in range(-2, 3):
        emp = np.searchsorted(b, m, side="right") / N
        print(f"   P(||inc|| <= 3**{m:+d})  simulated {emp:.4f}   exact {M.radius_cdf(m, dt):.4f}")

cfg = WalkConfig(M, 0.5, 10.0, 40_000, seed=3)
occ = run_paths(cfg).occupancy()
t = cfg.dt * np.arange(cfg.steps + 1)
S = M.survival_S(t)
print("\nfraction of paths in Z_3")
for k in range(0, cfg.steps + 1, 4):
    se = np.sqrt(S[k] * (1 - S[k]) / cfg.n_paths)
    print(f"  t={t[k]:5.1f}  walk {occ[k]:.4f}  S(t) {S[k]:.4f}  (se {se:.4f})")
