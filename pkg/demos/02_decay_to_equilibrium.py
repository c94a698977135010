"""
Decay to equilibrium
====================

Evolve random mean-zero data under a unit magnetic field and compare the
measured decay of the two entropy functionals and of a polynomially weighted
norm with the rates certified by the constants.
"""

import numpy as np

from magfp import GridConfig, MagneticField, Weight, random_state
from magfp.evolution import IntegratorConfig, Scheme, evolve
from magfp.experiments import deviation
from magfp.field import norm_lp_m
from magfp.hypoco import choose_constants, entropy_f_eps, entropy_h1, fit_decay, stepwise_entropy_dissipation
from magfp.operators import assemble_generator

grid = GridConfig(d_x=1, d_v=2, n_x=17, n_v=24)
B = MagneticField.constant(grid, 1.0)

# %%
# Constants: C_op is measured from the moment remainder map, eps and the
# two rates follow from it.
c = choose_constants(B, grid)
print(f"C_op = {c.C_op:.4f}, eps = {c.eps:.4f}, kappa_l2 = {c.kappa_l2:.4f}, kappa_h1 = {c.kappa_h1:.5f}")

# %%
# Evolve with the block-exact integrator (the generator is Fourier diagonal).
w = Weight.polynomial(8)
f0 = deviation(random_state(grid, np.random.default_rng(7), decay=0.2))
traces = {
    "F_eps": lambda s: entropy_f_eps(s, c.eps),
    "E_h1": lambda s: entropy_h1(s, c),
    "L2(<v>^8)": lambda s: norm_lp_m(s, w, 2.0),
}
traj = evolve(assemble_generator(grid, B), f0, IntegratorConfig(Scheme.EXACT_SMALL, 0.05, 10.0, 2), traces)
print(f"mass drift over [0, 10]: {traj.mass_drift():.1e}")

# %%
# Every step must dissipate at least at the certified rate; the fitted
# rates are far better than the guaranteed ones.
for name, kappa in (("F_eps", c.kappa_l2), ("E_h1", c.kappa_h1)):
    ok, worst = stepwise_entropy_dissipation(traj, name, kappa)
    fit = fit_decay(traj, name, (2.0, 10.0))
    print(f"{name:10s} stepwise ok={ok} worst ratio {worst:.4f}; fitted rate {fit.rate:.4f} vs certified {kappa:.4f}")

fit = fit_decay(traj, "L2(<v>^8)", (2.0, 10.0))
q = traj.norms["L2(<v>^8)"]
const = np.max(q * np.exp(0.5 * traj.times) / q[0])
print(f"L2(<v>^8): fitted rate {fit.rate:.4f} (r2 {fit.r2:.5f}), sup_t ||f(t)|| e^(t/2) / ||f0|| = {const:.4f}")
