import json
import os
import subprocess
import sys

import pytest

from billiard_lab.cli import orbit_from_json, orbit_to_json, run
from billiard_lab.geometry import save_table


def _summary(root, name):
    with open(os.path.join(root, name, "summary.json")) as fh:
        return json.load(fh)


def _manifest(root, name):
    with open(os.path.join(root, name, "manifest.json")) as fh:
        return json.load(fh)


def test_entropy_bundle(tmp_path):
    assert run(["--dir", str(tmp_path), "entropy"]) == 0
    s = _summary(tmp_path, "entropy")
    assert s["abramov"]["h_f"] == pytest.approx(0.47825077, abs=5e-9)
    m = _manifest(tmp_path, "entropy")
    assert set(m["files"]) >= {"summary.json", "nonadapted.csv"}
    assert len(m["config_hash"]) == 64


def test_missing_table_is_usage_error(tmp_path, capsys):
    assert run(["--dir", str(tmp_path), "validate", str(tmp_path / "nope.json")]) == 2
    err = json.loads(capsys.readouterr().err.strip().splitlines()[-1])
    assert err["error"] == "UsageError" and err["subcommand"] == "validate"


def test_bad_arguments(tmp_path):
    assert run(["--dir", str(tmp_path), "simulate", "builtin:two-disk"]) == 2
    assert run(["--dir", str(tmp_path)]) == 2


def test_overlap_is_geometry_error(tmp_path):
    p = tmp_path / "bad.json"
    p.write_text(json.dumps({"scatterers": [{"type": "circle", "center": [0.2, 0.5], "radius": 0.2},
                                            {"type": "circle", "center": [0.5, 0.5], "radius": 0.2}]}))
    assert run(["--dir", str(tmp_path), "validate", str(p), "--directions", "64", "--offsets", "64"]) == 3


def test_validate_two_disk_needs_flag(tmp_path, two_disk):
    p = tmp_path / "t.json"
    save_table(two_disk, p)
    args = ["--dir", str(tmp_path), "validate", str(p), "--directions", "128", "--offsets", "128"]
    assert run(args) == 3
    assert run(args + ["--allow-infinite-horizon"]) == 0


def test_simulate_writes_orbit(tmp_path):
    out = tmp_path / "orbit.csv"
    assert run(["--dir", str(tmp_path), "simulate", "builtin:two-disk", "--start", "0,0,0", "--steps", "4",
                "--out", str(out)]) == 0
    lines = out.read_text().splitlines()
    assert lines[0].split(",")[:4] == ["step", "i", "r", "phi"]
    assert len(lines) == 6


def test_orbit_and_lyapunov(tmp_path):
    orb = tmp_path / "head_on.json"
    assert run(["--dir", str(tmp_path), "orbit", "builtin:two-disk", "--itinerary", "0,1",
                "--out", str(orb)]) == 0
    assert run(["--dir", str(tmp_path), "lyapunov", "builtin:two-disk", "--orbit", str(orb)]) == 0
    s = _summary(tmp_path, "lyapunov")
    assert s["oracle_relative_error"] < 1e-12


def test_orbit_json_round_trip(head_on):
    d = orbit_to_json(head_on, 53)
    back = orbit_from_json(json.loads(json.dumps(d)))
    assert [p.i for p in back.points] == [0, 1]
    assert float(back.taus[0]) == pytest.approx(0.2)


def test_bundles_are_deterministic(tmp_path):
    for root in ("a", "b"):
        assert run(["--dir", str(tmp_path / root), "entropy", "--trunc", "500"]) == 0
        assert run(["--dir", str(tmp_path / root), "cones", "builtin:two-disk", "--samples", "50",
                    "--derivative-samples", "10"]) == 0
    assert run(["--dir", str(tmp_path / "a"), "report", "--compare", str(tmp_path / "b")]) == 0
    s = _summary(tmp_path / "a", "report")
    assert s["criteria"]["10"]["status"] == "pass"
    assert s["criteria"]["7"]["status"] == "pass"


def test_console_script(tmp_path):
    r = subprocess.run([sys.executable, "-m", "billiard_lab.cli", "--dir", str(tmp_path), "entropy",
                        "--trunc", "100"], capture_output=True, text=True)
    assert r.returncode == 0
    assert "h_f" in json.loads(r.stdout)["abramov"]
