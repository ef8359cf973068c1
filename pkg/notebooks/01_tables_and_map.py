# %% [markdown]
# # Tables and the billiard map
# Disks on the unit torus, the collision map T in (r, phi) coordinates and its
# derivative, checked against finite differences.

# %%
import math

import numpy as np

from billiard_lab.billiard_map import apply_inverse, apply_map, derivative_check, map_derivative, orbit_segment
from billiard_lab.geometry import PhasePoint, default_grazing_table, two_disk_table, validate_table

table = two_disk_table()
rep = validate_table(table, 1024, 1024, require_finite_horizon=False)
print("gap", rep.gap, "tau_min", rep.tau_min, "finite horizon", rep.finite_horizon)

# %% [markdown]
# The head-on orbit: leave the left disk along its outer normal, hit the right
# disk after a flight of 0.2.

# %%
x = PhasePoint(0, 0.0, 0.0)
res = apply_map(table, x)
print(res.next, res.tau_f)
print(map_derivative(table, x, res).array)

# %% [markdown]
# T^-1 is the time reversal of T.  A random point goes there and back.

# %%
y = PhasePoint(1, 0.3, 0.7)
fwd = apply_map(table, y)
back = apply_inverse(table, fwd.next)
print(y, "->", fwd.next, "->", back.next)

# %%
chk = derivative_check(table, 200, seed=1)
print(chk.to_dict())

# %% [markdown]
# The grazing table: three core disks carry a period-3 orbit, a fourth disk
# touches one of its flights, blockers close the open corridors.

# %%
g = default_grazing_table()
print(validate_table(g.table, 512, 512).to_dict())
orb = orbit_segment(g.table, g.x0, g.period, bits=256)
print([p.i for p in orb.points], orb.grazing)
print("closes to", float(orb.points[-1].r) - float(g.x0.r), float(orb.points[-1].phi) - float(g.x0.phi))
