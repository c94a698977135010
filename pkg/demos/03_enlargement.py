"""
Splitting and enlargement
=========================

Split the generator as A + B where A is a smooth velocity cutoff of height M
and radius R, search M and R so that B is dissipative in L2(<v>^4), and probe
the short-time smoothing of the semigroup generated by B.
"""

import numpy as np

from magfp import GridConfig, MagneticField, Weight
from magfp.evolution import duhamel_residual, smoothing_probe
from magfp.experiments import rough_state
from magfp.field import random_state
from magfp.hypoco import rayleigh_weighted
from magfp.operators import a_mp_limit, assemble_splitting, psi_lyapunov, search_splitting

grid = GridConfig(d_x=1, d_v=2, n_x=17, n_v=24)
w = Weight.polynomial(4)

# %%
# The Lyapunov function tends to a_mp at large |v|; any rate a > a_mp can be
# reached by a large enough cutoff.
print(f"a_mp(<v>^4, p=2) = {a_mp_limit(w, 2.0, grid.d_v)}")
res = search_splitting(w, 2.0, -1.0, grid)
for M, R, sup in res.history:
    print(f"  M = {M:5g}  R = {R:4g}  sup(Psi - M chi_R) = {sup:8.4f}")
print(f"psi sup outside the cutoff: {psi_lyapunov(w, 2.0, grid, res.M, res.R).psi_sup_outside:.4f}")
print(f"Rayleigh bound of B in L2(<v>^4): {rayleigh_weighted(grid, w, res.M, res.R):.4f}")

# %%
# Duhamel: S_L(t) = S_B(t) + (S_L * A S_B)(t).
bundle = assemble_splitting(grid, MagneticField.constant(grid, 1.0), w, 2.0, res.M, res.R)
f0 = random_state(grid, np.random.default_rng(1), decay=0.2)
print(f"Duhamel residual at t = 0.5: {duhamel_residual(bundle, 0.5, f0):.1e}")

# %%
# Data living on the top Hermite shell is as rough as the grid allows; the
# L1 -> L2 ratio of S_B(t) blows up at least like t^(-1/2) as t -> 0.
ts = np.logspace(-3, -1, 13)
rough = rough_state(grid, np.random.default_rng(2))
for op in ("S", "AS", "SA"):
    pr = smoothing_probe(bundle, rough, 1.0, 2.0, ts, fit_range=(1e-3, 1e-1), operator=op)
    print(f"{op:2s}: log-log slope {pr.slope:.4f}")
