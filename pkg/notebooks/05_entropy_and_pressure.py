# %% [markdown]
# # Bernoulli weights, entropy and pressure
# Weights p_n proportional to (3/2)^-floor(n/2) on return times n give an
# induced Bernoulli measure whose Abramov entropy has a closed form.

# %%
import math
from fractions import Fraction

from billiard_lab.geometry import default_grazing_table
from billiard_lab.manifolds import find_homoclinic, shadowing_family
from billiard_lab.symbolic import (BernoulliSpec, CatalogEntry, PressureQuery, abramov_entropy, entropy_T,
                                   nonadapted_partial_sums, pressure_divergence_report)

spec = BernoulliSpec(Fraction(3, 2), 10_000)
rep = abramov_entropy(spec)
print("b", spec.b, "mean return", spec.mean_return_exact, "h_f", rep["h_f"])
for ell in (1, 2, 5):
    print(entropy_T(spec, ell))

# %% [markdown]
# Every term p_n (3/2)^floor(n/2) equals 1/5, so the series that would make
# the measure adapted grows linearly.

# %%
sums = nonadapted_partial_sums(spec, math.exp(-1), 100)
print(sums[9], sums[99])

# %% [markdown]
# Periodic orbits carry zero entropy, so h - t lambda at t < 0 is -t lambda,
# unbounded along the shadowing family.

# %%
g = default_grazing_table()
fam = shadowing_family(g, find_homoclinic(g), 14)
cat = [CatalogEntry(y.n, y.orbit, y.lyapunov.exponent, "", -y.log_inv_dist / math.log(10)) for y in fam]
for M in (1, 2, 4):
    print(M, pressure_divergence_report(PressureQuery(-0.1, cat, M)).first_exceeding)
