# %% [markdown]
# # Homoclinic excursion and the shadowing family
# A transverse crossing of the unstable and stable curves gives an excursion
# away from x0 and back.  Gluing it to n - 1 grazing cycles gives periodic
# orbits y_n that approach x0 double-exponentially closely.

# %%
from billiard_lab.geometry import default_grazing_table
from billiard_lab.manifolds import find_homoclinic, shadowing_family

g = default_grazing_table()
w = find_homoclinic(g)
print("a, b, m", w.a, w.b, w.m, "crossing angle", w.crossing_angle)
print("itinerary", w.itinerary.scatterers)

# %% [markdown]
# Each orbit is solved by Newton on the length functional, continued from
# the previous one with a grazing cycle inserted; the precision follows the
# depth of the approach.

# %%
fam = shadowing_family(g, w, 12)
for y in fam:
    print(y.n, y.bits, round(y.log_inv_dist, 2), round(y.lyapunov.exponent, 3))
