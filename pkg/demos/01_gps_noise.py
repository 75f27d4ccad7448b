"""
How big is a GPS error?
=======================

Fixes from a phone are off by a random distance whose square follows an
exponential law; the distance itself is Rayleigh distributed with scale E,
the root-mean-squared error. This script draws a few of them and shows what
they do to a crowd standing on the ramp.
"""
import math

import numpy as np

from ares import load_scenario, spawn_grid
from ares.noise import magnitude_from_uniform, perturb_positions, sample_error_magnitude

rng = np.random.default_rng(1)

# The median error has a closed form: E * sqrt(ln 2).
for E in (1.0, 5.0, 10.0):
    print(f"E = {E:4.1f} m   median {magnitude_from_uniform(0.5, E):5.2f} m   "
          f"mean {E * math.sqrt(math.pi) / 2:5.2f} m")

# Sampled means agree with E * sqrt(pi) / 2 and the RMS comes back as E.
print()
print("   E   sample mean   sample RMS")
for E in range(1, 11):
    z = sample_error_magnitude(float(E), rng, 200_000)
    print(f"{E:4d}   {z.mean():11.3f}   {math.sqrt(np.mean(z ** 2)):10.3f}")

# Now shift 1000 agents standing on the 22 m wide ramp.
sc = load_scenario()
pos = spawn_grid(sc, 1000)
x0, y0, x1, y1 = sc.walkable["right_ramp"]
print()
for E in (0.0, 2.0, 5.0, 10.0):
    moved = perturb_positions(pos, E, rng)
    off = np.mean((moved[:, 1] < y0) | (moved[:, 1] > y1))
    d = np.hypot(*(moved[:, None] - moved[None]).transpose(2, 0, 1))
    np.fill_diagonal(d, np.inf)
    overlap = np.mean(d.min(axis=1) < 0.38)
    print(f"E = {E:4.1f}: {off:6.1%} of agents off the ramp, {overlap:6.1%} overlapping a neighbour")

# Nobody gets put back on the walkway; the simulator has to cope with agents
# that start inside walls or on top of each other.
