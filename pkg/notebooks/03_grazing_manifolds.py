# %% [markdown]
# # Local manifolds of the grazing periodic point
# G = T^4 fixes x0, a tangential collision.  Its local unstable curve is grown
# generation by generation on a geometric grid in u = |r - r0|.

# %%
from billiard_lab.geometry import default_grazing_table
from billiard_lab.manifolds import grow_stable_manifold, grow_unstable_manifold, verify_growth_lemma

g = default_grazing_table()
K = 1 / g.table[g.x0.i].radius_f

curve = grow_unstable_manifold(g, 5)
print("bits", curve.bits)
print("log10 sup|phi_{n+1} - phi_n|", curve.log10_sup_diffs())
print("end slope", curve.end_slope(), "curvature", K)
print("all in cone", all(c[4] for c in curve.cone_report(K)))

# %% [markdown]
# The stable curve is the time-reversed construction.

# %%
s = grow_stable_manifold(g, 3)
print("stable end slope", s.end_slope())

# %% [markdown]
# Near x0 one inverse step roughly squares the distance, so log log(1/d)
# grows linearly along backward orbits.

# %%
rep = verify_growth_lemma(g, curve, decades=4)
print("exponent_a", rep.exponent_a, "rate", rep.exponent_b_rate, "decades", rep.decades)
