import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from billiard_lab.billiard_map import apply_map, map_derivative
from billiard_lab.geometry import PhasePoint
from billiard_lab.hyperbolicity import (ON_S0, ConeSpec, check_cone_invariance, cone_at, cone_contains,
                                        cycle_product, euclidean_expansion, lyapunov_periodic, strip_index)

HEAD_ON_RATE = 7 / 3 + math.sqrt(40 / 9)


def test_cone_endpoints_at_head_on(two_disk, head_on_point):
    u = cone_at(two_disk, head_on_point, "unstable")
    assert u.interval == pytest.approx((1 / 0.15, 1 / 0.15 + 5.0))
    s = cone_at(two_disk, head_on_point, "stable")
    assert s.interval == pytest.approx((-1 / 0.15 - 5.0, -1 / 0.15))


def test_cone_membership():
    c = ConeSpec("unstable", 2.0, 1.0)
    assert cone_contains(c, (1.0, 2.5))
    assert cone_contains(c, (2.0, 6.0))
    assert not cone_contains(c, (1.0, 3.5))
    assert not cone_contains(c, (0.0, 1.0))
    with pytest.raises(ValueError):
        cone_contains(c, (0.0, 0.0))
    with pytest.raises(ValueError):
        ConeSpec("neutral", 1.0, 1.0)


def test_head_on_maps_cone_inside(two_disk, head_on_point):
    res = apply_map(two_disk, head_on_point)
    D = map_derivative(two_disk, head_on_point, res)
    here = cone_at(two_disk, head_on_point, "unstable")
    there = cone_at(two_disk, res.next, "unstable", tau=res.tau)
    for s in here.interval:
        assert cone_contains(there, D.apply((1.0, s)), rtol=0)


@pytest.mark.parametrize("kind", ["unstable", "stable"])
def test_sampled_cone_invariance(two_disk, kind):
    rep = check_cone_invariance(two_disk, 300, kind=kind, seed=1)
    assert rep.tested > 200
    assert rep.ok, rep.failures[:3]
    assert rep.min_expansion >= rep.Lambda - 1e-9
    assert rep.Lambda == pytest.approx(1 + 2 * 0.2 / 0.15)


def test_grazing_table_cone_invariance(grazing):
    rep = check_cone_invariance(grazing.table.with_precision(53), 200, seed=2)
    assert rep.ok


def test_expansion_of_head_on(two_disk, head_on_point):
    # lower edge slope K maps with Euclidean factor bounded below by 1 + tau K
    assert euclidean_expansion(two_disk, head_on_point) > 1 + 0.2 / 0.15


@pytest.mark.parametrize("phi,k", [(0.0, 0), (0.5, 0), (math.pi / 2 - 0.5, 1), (math.pi / 2 - 0.2, 2),
                                   (-(math.pi / 2 - 0.01), 10), (math.pi / 2, ON_S0)])
def test_strip_index(phi, k):
    assert strip_index(phi) == k


def test_strip_edges():
    for k in (3, 7, 20):
        assert strip_index(math.pi / 2 - 1 / k ** 2) == k


def test_strip_rejects_out_of_range():
    with pytest.raises(ValueError):
        strip_index(2.0)


@settings(max_examples=200)
@given(st.floats(-math.pi / 2 + 1e-9, math.pi / 2 - 1e-9))
def test_strip_contains_angle(phi):
    k = strip_index(phi)
    gap = math.pi / 2 - abs(phi)
    if k == 0:
        assert gap > 1
    else:
        assert 1 / (k + 1) ** 2 * (1 - 1e-12) <= gap <= 1 / k ** 2 * (1 + 1e-12)


def test_head_on_lyapunov_closed_form(two_disk, head_on):
    rep = lyapunov_periodic(two_disk, head_on)
    assert rep.exponent == pytest.approx(math.log(HEAD_ON_RATE), rel=1e-13)
    M = cycle_product(two_disk, head_on).array
    rho = max(abs(np.linalg.eigvals(M)))
    assert math.log(rho) / 2 == pytest.approx(rep.exponent, rel=1e-12)


def test_lyapunov_per_return(two_disk, head_on):
    rep = lyapunov_periodic(two_disk, head_on, ell=2)
    assert rep.per_f_step == pytest.approx(8 * rep.exponent)


def test_zero_samples_pass_vacuously(two_disk):
    rep = check_cone_invariance(two_disk, 0)
    assert rep.tested == 0 and rep.ok and rep.pass_fraction == 1.0


def test_periodic_exponent_above_log_lambda(two_disk, head_on):
    rep = lyapunov_periodic(two_disk, head_on)
    assert rep.exponent >= math.log(rep.Lambda)


def test_near_grazing_image_expands_strongly(two_disk):
    import mpmath

    # aim along +x at height R - eps above the axis: cos(phi1) = sqrt(2 eps / R) to leading order
    table = two_disk.with_precision(256)
    with mpmath.workprec(256):
        R = mpmath.mpf(0.15)
        h = R - R * mpmath.mpf(10) ** -18 / 2
        theta = mpmath.asin(h / R)
        x = PhasePoint(0, (-theta * R) % (2 * mpmath.pi * R), theta)
    res = apply_map(table, x, 256)
    c1 = float(res.cos_next)
    assert 0.5e-9 < c1 < 2e-9
    D = map_derivative(table, x, res).array
    w = D @ np.array([1.0, 1 / 0.15])
    assert np.linalg.norm(w) / math.hypot(1.0, 1 / 0.15) >= 1e8


def test_expansion_prefactor(two_disk):
    from billiard_lab.hyperbolicity import expansion_prefactor

    rep = expansion_prefactor(two_disk, 50, steps=5)
    assert rep["samples"] > 40
    assert 0 < rep["C_e"] < 10
