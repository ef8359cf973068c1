import json
import math

import pytest
from hypothesis import given, settings, strategies as st

from billiard_lab._numeric import working_precision
from billiard_lab.billiard_map import orbit_segment
from billiard_lab.errors import (HorizonUnbounded, NoGrazingCollision, OverlappingScatterers,
                                 TangencyPlacementFailed)
from billiard_lab.geometry import (PhasePoint, Table, build_grazing_table, check_grazing_assumption, circle,
                                   load_system, load_table, min_gap, save_table, validate_table)


def test_disjoint_pair_gap_matches_translate_minimum():
    t = Table((circle(0.0, 0.0, 0.4), circle(0.5, 0.5, 0.2)))
    gap, _ = min_gap(t)
    # nearest translates are at distance sqrt(0.5)
    assert gap == pytest.approx(math.sqrt(0.5) - 0.6, rel=1e-12)
    assert gap > 0


def test_equal_disks_on_diagonal_are_disjoint():
    t = Table((circle(0.0, 0.0, 0.3), circle(0.5, 0.5, 0.3)))
    assert min_gap(t)[0] == pytest.approx(math.sqrt(0.5) - 0.6)


def test_overlap_raises():
    with pytest.raises(OverlappingScatterers):
        validate_table(Table((circle(0.2, 0.5, 0.2), circle(0.5, 0.5, 0.2))), 64, 64)


def test_single_disk_has_open_corridor():
    with pytest.raises(HorizonUnbounded):
        validate_table(Table((circle(0.5, 0.5, 0.1),)), 256, 256)


def test_grazing_table_validates(grazing):
    rep = validate_table(grazing.table, 512, 512)
    assert rep.finite_horizon and rep.disjoint
    assert rep.K_min == pytest.approx(1 / 0.2)
    assert grazing.period == 4


def test_grazing_cycle_closes(grazing):
    orb = orbit_segment(grazing.table, grazing.x0, 4, bits=256)
    with working_precision(256) as ops:
        assert abs(orb.points[-1].r - grazing.x0.r) < 1e-10
        assert abs(orb.points[-1].phi - grazing.x0.phi) < 1e-10
        assert orb.points[0].dist_S0(ops) == 0


def test_tangent_disk_too_large_fails(grazing):
    core = tuple(grazing.table.scatterers[:3])
    with pytest.raises(TangencyPlacementFailed):
        build_grazing_table(core, 0.3)


def test_tangency_at_segment_end_fails(grazing):
    core = tuple(grazing.table.scatterers[:3])
    with pytest.raises(TangencyPlacementFailed):
        build_grazing_table(core, 0.02, position=0.0)


def test_one_sided_grazing(grazing):
    orb = orbit_segment(grazing.table, grazing.x0, 4, bits=256)
    chk = check_grazing_assumption(grazing.table, orb)
    assert chk.one_sided


def test_head_on_orbit_has_no_grazing(two_disk, head_on):
    with pytest.raises(NoGrazingCollision):
        check_grazing_assumption(two_disk, head_on)


def test_table_round_trip(tmp_path, two_disk):
    p = tmp_path / "t.json"
    save_table(two_disk, p)
    t = load_table(p)
    assert t.centers.tolist() == two_disk.centers.tolist()
    assert json.loads(p.read_text())["scatterers"][0]["type"] == "circle"


def test_grazing_table_round_trip(tmp_path, grazing):
    p = tmp_path / "g.json"
    p.write_text(json.dumps(grazing.to_json()))
    g = load_system(p)
    with working_precision(256):
        assert g.x0.i == grazing.x0.i
        assert abs(g.x0.r - grazing.x0.r) < 1e-60


def test_decimal_strings_keep_precision(tmp_path):
    p = tmp_path / "t.json"
    p.write_text('{"scatterers": [{"type": "circle", "center": [0.1, 0.2], '
                 '"radius": 0.12345678901234567890123456789}], "precision_bits": 200}')
    t = load_table(p)
    with working_precision(200) as ops:
        assert str(t[0].coords(ops)[2]).startswith("0.1234567890123456789012345678")


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 1), st.floats(0, 0.94), st.floats(-1.57, 1.57))
def test_distance_to_grazing_set(i, r, phi):
    x = PhasePoint(i, r, phi)
    d = x.dist_S0(__import__("billiard_lab")._numeric.FloatOps)
    assert d >= 0
    assert (d == 0) == (abs(phi) == math.pi / 2)
