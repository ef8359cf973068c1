import math
from fractions import Fraction

import pytest
from hypothesis import given, settings, strategies as st

from billiard_lab.errors import GrazingOrbit, NotExceeded
from billiard_lab.geometry import PhasePoint
from billiard_lab.symbolic import (BernoulliSpec, CatalogEntry, PressureQuery, abramov_entropy,
                                   adaptedness_witness, entropy_T, nonadapted_partial_sums, nonadapted_terms,
                                   pressure_divergence_report, srb_density)


def brute(rho, N):
    w = [rho ** -(n // 2) for n in range(1, N + 1)]
    b = sum(w)
    p = [v / b for v in w]
    num = -sum(q * math.log(q) for q in p)
    den = sum(n * q for n, q in enumerate(p, 1))
    return b, num, den


def test_closed_forms_at_three_halves():
    spec = BernoulliSpec()
    assert spec.b == 5
    assert spec.mean_return_exact == Fraction(27, 5)
    rep = abramov_entropy(spec)
    assert rep["numerator"] == pytest.approx(2.5825542, abs=5e-8)
    assert rep["h_f"] == pytest.approx(0.47825077, abs=5e-9)
    assert rep["h_f"] == pytest.approx((math.log(5) + 12 / 5 * math.log(1.5)) / 5.4, rel=1e-14)


def test_truncated_sums_match_direct_summation():
    b, num, den = brute(1.5, 400)
    rep = abramov_entropy(BernoulliSpec(N=10_000))
    assert rep["b"] == pytest.approx(b, rel=1e-12)
    assert rep["numerator"] == pytest.approx(num, rel=1e-12)
    assert rep["denominator"] == pytest.approx(den, rel=1e-12)
    assert float(rep["truncation_error"]) < 1e-300


@settings(max_examples=30, deadline=None)
@given(st.fractions(Fraction(11, 10), Fraction(5)), st.integers(4, 60))
def test_tail_accounts_for_truncation(rho, N):
    rep = abramov_entropy(BernoulliSpec(rho, N))
    assert rep["mass_truncated"] + float(rep["tail_mass"]) == pytest.approx(1.0, rel=1e-12)
    assert float(rep["tail_mass"]) <= float(rep["tail_mass_bound"]) * (1 + 1e-12)
    assert abs(rep["h_f_truncated"] - rep["h_f"]) <= float(rep["truncation_error"]) * 1.01 + 1e-15


def test_entropy_of_T():
    rep = entropy_T(BernoulliSpec(), 1)
    assert rep["h_T"] == pytest.approx(0.11956269, abs=5e-9)
    assert rep["floor"] == pytest.approx(math.log(1.5) / 32)
    assert rep["exceeds_floor"]
    assert entropy_T(BernoulliSpec(), 3)["h_T"] == pytest.approx(rep["h_T"] / 3)
    with pytest.raises(ValueError):
        entropy_T(BernoulliSpec(), 0)


def test_invalid_specs():
    with pytest.raises(ValueError):
        BernoulliSpec(Fraction(1))
    with pytest.raises(ValueError):
        BernoulliSpec(N=0)
    with pytest.raises(ValueError):
        abramov_entropy(BernoulliSpec(N=1))


def test_nonadapted_terms_constant():
    spec = BernoulliSpec()
    assert all(float(t) == pytest.approx(0.2, rel=1e-15) for t in nonadapted_terms(spec, 50))


def test_nonadapted_partial_sum_grows_linearly():
    s = nonadapted_partial_sums(BernoulliSpec(), math.exp(-1), 100)
    assert s[-1] == pytest.approx(20.0, rel=1e-12)
    assert s[9] == pytest.approx(2.0, rel=1e-12)
    with pytest.raises(ValueError):
        nonadapted_partial_sums(BernoulliSpec(), 1.5, 10)


def test_srb_density(two_disk):
    total = 2 * 2 * math.pi * 0.15
    assert srb_density(two_disk, PhasePoint(0, 0.1, 0.0)) == pytest.approx(1 / (2 * total))
    assert srb_density(two_disk, PhasePoint(0, 0.1, math.pi / 3)) == pytest.approx(0.5 / (2 * total))


def test_adaptedness_witness(head_on):
    w = adaptedness_witness(head_on)
    assert float(w["epsilon_star"]) == pytest.approx(math.pi / 2)
    assert w["condition_a"]


def test_grazing_orbit_has_no_witness(grazing):
    with pytest.raises(GrazingOrbit):
        adaptedness_witness(grazing.orbit)


def _catalog(head_on, lams):
    return [CatalogEntry(n, head_on, lam, "0.1", -1.0) for n, lam in enumerate(lams, 1)]


def test_pressure_report(head_on):
    cat = _catalog(head_on, [2.0, 20.0, 200.0])
    rep = pressure_divergence_report(PressureQuery(-0.1, cat, 10.0))
    assert rep.first_exceeding == 3
    assert [r["value"] for r in rep.rows] == pytest.approx([0.2, 2.0, 20.0])


def test_pressure_not_exceeded(head_on):
    with pytest.raises(NotExceeded):
        pressure_divergence_report(PressureQuery(-0.1, _catalog(head_on, [2.0, 3.0]), 100.0))


def test_pressure_positive_t_is_bounded(head_on):
    rep = pressure_divergence_report(PressureQuery(0.5, _catalog(head_on, [2.0, 3.0]), 0.0))
    assert rep.first_exceeding is None
    assert all(r["value"] < 0 for r in rep.rows)


def test_empty_catalog():
    with pytest.raises(ValueError):
        PressureQuery(-0.1, [], 1.0)
