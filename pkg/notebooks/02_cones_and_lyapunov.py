# %% [markdown]
# # Cones, expansion and Lyapunov exponents

# %%
import math

import numpy as np

from billiard_lab.geometry import PhasePoint, two_disk_table
from billiard_lab.hyperbolicity import (check_cone_invariance, cone_at, cycle_product, lyapunov_periodic,
                                        strip_index)
from billiard_lab.periodic import ItinerarySpec, solve_periodic

table = two_disk_table()
x = PhasePoint(0, 0.0, 0.0)
print("unstable cone", cone_at(table, x, "unstable").interval)
print("stable cone", cone_at(table, x, "stable").interval)

# %% [markdown]
# Sampled invariance: every image of a cone edge lands strictly inside the
# cone at the image point and is stretched at least by Lambda in the
# adapted norm.

# %%
for kind in ("unstable", "stable"):
    rep = check_cone_invariance(table, 2000, kind=kind)
    print(kind, rep.pass_fraction, rep.min_expansion, rep.Lambda)

# %% [markdown]
# Homogeneity strips near grazing.

# %%
for gap in (2.0, 0.5, 0.1, 0.01, 1e-4):
    print(gap, strip_index(math.pi / 2 - gap))

# %% [markdown]
# The head-on period-2 orbit has a closed-form eigenvalue
# a + sqrt(a^2 - 1) with a = tau K + 1.

# %%
orbit = solve_periodic(table, ItinerarySpec((0, 1), None))
rep = lyapunov_periodic(table, orbit)
a = 0.2 / 0.15 + 1
print(rep.exponent, math.log(a + math.sqrt(a * a - 1)))
print(np.linalg.eigvals(cycle_product(table, orbit).array))
