"""Dispersing billiards on the torus near a grazing periodic orbit.

Exact-precision billiard map and derivative, cone and Lyapunov checks,
local stable/unstable curves of a grazing orbit, homoclinic points and the
periodic orbits that shadow them, and the Bernoulli entropy bookkeeping.
"""
__version__ = "0.1.0"

from .billiard_map import apply_inverse, apply_map, derivative_check, map_derivative, orbit_segment
from .geometry import (PhasePoint, Table, circle, default_grazing_table, load_system, load_table,
                       two_disk_table, validate_table)
from .hyperbolicity import (check_cone_invariance, cone_contains, expansion_prefactor, lyapunov_periodic,
                            strip_index)
from .manifolds import (build_shadowing_orbit, distance_prefactor, empirical_delta, find_homoclinic,
                        grow_stable_manifold, grow_unstable_manifold, shadowing_family, verify_growth_lemma)
from .periodic import ItinerarySpec, solve_periodic
from .symbolic import (BernoulliSpec, abramov_entropy, adaptedness_witness, entropy_T,
                       pressure_divergence_report)
