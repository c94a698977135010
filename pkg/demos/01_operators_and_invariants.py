"""
Operators and their invariants
==============================

Assemble the Hermite x Fourier discretization of the magnetized kinetic
Fokker-Planck generator and look at the structure it inherits from the
continuous problem: skew transport and magnetic parts, an exactly diagonal
collision part, conserved mass and a spectral gap.
"""

import numpy as np

from magfp import GridConfig, MagneticField, random_state
from magfp.operators import assemble_collision, assemble_generator, assemble_magnetic, assemble_transport

# One space dimension, two velocity dimensions, 17 Fourier modes, Hermite degree <= 24.
grid = GridConfig(d_x=1, d_v=2, n_x=17, n_v=24)
print(f"grid: {grid.n_fourier} Fourier modes x {grid.n_alpha} Hermite modes = {grid.size} unknowns")

# A space-varying field B(x) = 0.2 + 0.5 cos x + 0.3 sin x.
B = MagneticField.from_modes(grid, [(0, (1,), 0.5, 0.3)], [0.2])
print(f"sup |B| = {B.sup_norm:.4f}, sup |grad B| = {B.grad_sup_norm:.4f}")

# %%
# Transport and magnetic rotation are skew-adjoint in L2(dx dmu); the
# collision operator is diagonal with entries |alpha|.
T, G, C = assemble_transport(grid), assemble_magnetic(grid, B), assemble_collision(grid)
print(f"skew defects: transport {T.skew_defect():.1e}, magnetic {G.skew_defect():.1e}")

rng = np.random.default_rng(0)
f = random_state(grid, rng, decay=0.2)
c = f.vector
lhs = np.vdot(c, C.matrix @ c).real
rhs = float((np.tile(grid.degrees, grid.n_fourier) * np.abs(c) ** 2).sum())
print(f"Re<P1 f, f> = {lhs:.12f}, sum |alpha| |c|^2 = {rhs:.12f}")

# %%
# The generator conserves mass: the zero mode of P f vanishes.
P = assemble_generator(grid, B)
print(f"mass rate of a random state: {abs(P.apply(f).mean()):.1e}")

# %%
# For a constant field each Fourier block can be diagonalized exactly.
# The gap is 1 without field and drops to 1/2 at the first frequency for B = 1.
for b in (0.0, 1.0):
    Pc = assemble_generator(grid, MagneticField.constant(grid, b))
    top = -np.inf
    for k in range(grid.n_fourier):
        ev = np.sort(np.linalg.eigvals(Pc.block(k)).real)[::-1]
        if k == grid.zero_mode:
            ev = ev[1:]
        top = max(top, ev[0])
    print(f"B = {b}: spectral gap {-top:.6f}")
