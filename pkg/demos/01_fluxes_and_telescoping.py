"""Numerical fluxes and why a flux-form update conserves mass.

Builds the Rusanov flux for Burgers, evaluates it on a small grid and shows
that the cell tendencies sum to the boundary flux difference alone.
"""
import numpy as np

from multirate import burgers

spec = burgers(n_cells=8)
grid = spec.grid()
disc = spec.discretization(grid)
u0 = spec.initial_state(grid)

F = disc.fluxes(u0.values, None, 0.0)
print("interface fluxes:", np.round(F[0], 4))

tendency = disc(u0.values, 0.0)
print("cell tendencies: ", np.round(tendency[0], 4))

# sum_i dx * du_i/dt collapses to F_left - F_right: interior fluxes cancel
total = grid.dx * tendency.sum()
print(f"dx * sum(tendency) = {total:+.6f}, boundary flux difference = {F[0, 0] - F[0, -1]:+.6f}")
