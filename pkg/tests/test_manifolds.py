import math

import mpmath
import pytest

from billiard_lab._numeric import working_precision
from billiard_lab.errors import NotFoundWithinBudget, PrecisionExhausted, SeedCutBySingularity
from billiard_lab.hyperbolicity import lyapunov_periodic
from billiard_lab.manifolds import (build_shadowing_orbit, cycle_itinerary, find_homoclinic, grow_stable_manifold,
                                    grow_unstable_manifold, iterate_G, reference_itinerary, shadowing_family,
                                    verify_growth_lemma, word_itinerary)
from billiard_lab.periodic import reflection_residual


@pytest.fixture(scope="module")
def unstable3(grazing):
    return grow_unstable_manifold(grazing, 3)


@pytest.fixture(scope="module")
def family(grazing, witness):
    return shadowing_family(grazing, witness, 6)


def test_x0_is_fixed_by_G(grazing):
    z, seq, _ = iterate_G(grazing.table, grazing.x0, grazing.period, bits=256)
    with working_precision(256):
        assert abs(z.r - grazing.x0.r) < 1e-60
    assert tuple(seq) == tuple(reference_itinerary(grazing))


def test_unstable_curve_ends_at_x0(unstable3, grazing):
    assert unstable3.generation == 3
    with working_precision(unstable3.bits):
        assert unstable3.rs[0] == grazing.rebuild(unstable3.bits).x0.r
    offs = unstable3.offsets()
    assert offs[0] == (0.0, 0.0)
    assert all(u > 0 for u, _ in offs[1:])


def test_unstable_curve_in_cones(unstable3, grazing):
    K = 1 / grazing.table[grazing.x0.i].radius_f
    rows = unstable3.cone_report(K)
    assert rows and all(inside for *_, inside in rows)


def test_generations_converge(unstable3):
    d = unstable3.log10_sup_diffs()
    assert len(d) == 2
    # super-exponential: each difference far below the last
    assert d[1] < 2 * d[0]
    assert unstable3.monotone_in_generation()


def test_stable_curve_mirrors_unstable(grazing, unstable3):
    s = grow_stable_manifold(grazing, 3)
    K = 1 / grazing.table[grazing.x0.i].radius_f
    assert all(inside for *_, inside in s.cone_report(K))
    # time reversal of the symmetric table maps one curve onto the other
    assert s.end_slope() == pytest.approx(-unstable3.end_slope(), rel=1e-6)


def test_seed_too_short(grazing):
    with pytest.raises(SeedCutBySingularity):
        grow_unstable_manifold(grazing, 2, seed_halfwidth=1e-14)


def test_precision_cap(grazing):
    with pytest.raises(PrecisionExhausted):
        grow_unstable_manifold(grazing, 12, max_bits=4096)


def test_growth_lemma_exponents(grazing):
    curve = grow_unstable_manifold(grazing, 5)
    rep = verify_growth_lemma(grazing, curve, decades=3)
    # a single inverse step roughly squares the distance
    assert rep.exponent_a == pytest.approx(2.0, abs=0.25)
    assert rep.exponent_b_rate > math.log(1.5)


def test_homoclinic_budget(grazing):
    with pytest.raises(NotFoundWithinBudget):
        find_homoclinic(grazing, max_iters=0)


def test_homoclinic_witness(witness, grazing):
    assert witness.crossing_angle > 1e-3
    assert (witness.a + witness.b) % grazing.period == 0
    assert witness.z_u.i == grazing.x0.i and witness.z_s.i == grazing.x0.i
    assert witness.itinerary.scatterers[0] == grazing.x0.i
    assert witness.m == 1


def test_word_itineraries(grazing, witness):
    cyc = cycle_itinerary(grazing)
    assert len(cyc) == grazing.period
    w = word_itinerary(grazing, witness, "100", 1)
    assert len(w) == witness.a + witness.b + 2 * grazing.period
    assert w.scatterers[len(witness.itinerary):] == cyc.scatterers * 2


def test_shadowing_orbits(family, grazing):
    assert [y.n for y in family] == list(range(1, 7))
    for y in family:
        assert y.orbit.period == 4 * y.n
        assert y.residual < 1e-100
        assert reflection_residual(grazing.rebuild(y.bits).table, y.orbit) < 1e-100


def test_shadowing_approach_deepens(family):
    depth = [y.log_inv_dist for y in family]
    assert all(b > a for a, b in zip(depth, depth[1:]))
    assert depth[-1] > 30


def test_shadowing_exponents(family, grazing):
    lam = [y.lyapunov.exponent for y in family]
    assert all(b > a for a, b in zip(lam, lam[2:]))
    y = family[2]
    rep = lyapunov_periodic(grazing.rebuild(y.bits).table, y.orbit, bits=y.bits)
    assert rep.exponent == pytest.approx(y.lyapunov.exponent, rel=1e-12)


def test_symmetric_middle_point(family, grazing):
    # odd n: the middle grazing visit sits exactly on the mirror axis of the table
    y = family[2]
    with working_precision(y.bits):
        k = y.closest
        assert abs(y.orbit.points[k].r - grazing.rebuild(y.bits).x0.r) < mpmath.mpf(10) ** -100


def test_build_single_orbit(grazing, witness):
    y = build_shadowing_orbit(grazing, witness, 2)
    assert y.n == 2


def test_precision_cap_stops_family(grazing, witness):
    with pytest.raises(PrecisionExhausted):
        build_shadowing_orbit(grazing, witness, 9, max_bits=800)


def test_empirical_constants(grazing, witness, family):
    from billiard_lab.manifolds import distance_prefactor, empirical_delta, lyapunov_floor

    delta = empirical_delta(grazing, witness)
    assert 0 < delta < 1
    C = distance_prefactor(family, delta)
    for y in family:
        assert -y.log_inv_dist <= math.log(C) + 1.5 ** (y.n // 2) * math.log(delta) + 1e-9
        assert y.lyapunov.exponent >= lyapunov_floor(y.n, y.ell, delta)


def test_shadowing_orbits_close_under_the_map(family, grazing):
    from billiard_lab.billiard_map import orbit_segment
    from billiard_lab.manifolds import phase_distance

    for y in family[:4]:
        g = grazing.rebuild(y.bits)
        seg = orbit_segment(g.table, y.orbit.points[0], y.orbit.period, bits=y.bits)
        with working_precision(y.bits) as ops:
            assert seg.points[-1].i == y.orbit.points[0].i
            assert phase_distance(ops, g.table, y.orbit.points[0], seg.points[-1]) < 1e-8


def test_distance_ratios_shrink_doubly_exponentially(family):
    depth = [y.log_inv_dist for y in family]
    # log(d_n / d_{n+2}) grows geometrically along each parity class
    gains = [depth[k + 2] - depth[k] for k in range(len(depth) - 2)]
    assert all(b > 1.5 * a for a, b in zip(gains, gains[2:]))
