import math
import sys

import pytest

from billiard_lab.geometry import PhasePoint, default_grazing_table, two_disk_table
from billiard_lab.manifolds import find_homoclinic
from billiard_lab.periodic import ItinerarySpec, solve_periodic


@pytest.fixture(scope="session")
def two_disk():
    return two_disk_table()


@pytest.fixture(scope="session")
def head_on(two_disk):
    return solve_periodic(two_disk, ItinerarySpec((0, 1), ((0, 0), (0, 0))))


@pytest.fixture(scope="session")
def head_on_point():
    # rightmost point of the left disk; arclength runs clockwise from angle 0
    return PhasePoint(0, 0.0, 0.0)


@pytest.fixture(scope="session")
def grazing():
    return default_grazing_table()


@pytest.fixture(scope="session")
def witness(grazing):
    return find_homoclinic(grazing)


def close(a, b, rel=1e-12, abs_=0.0):
    return math.isclose(float(a), float(b), rel_tol=rel, abs_tol=abs_)


def pytest_terminal_summary(terminalreporter):
    mod = next((m for name, m in list(sys.modules.items()) if name.endswith("test_acceptance")), None)
    results = getattr(mod, "RESULTS", None)
    if results:
        terminalreporter.section("acceptance criteria")
        for k in sorted(results):
            terminalreporter.write_line(results[k])
