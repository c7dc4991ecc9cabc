import pytest

from finslercut import make_euclidean, make_zermelo
from finslercut.chart import Grid, plane_window, torus
from finslercut.distance import distance_field
from finslercut.sets import Circle, ClosedSet, Point


@pytest.fixture(scope="session")
def euclid():
    return make_euclidean()


@pytest.fixture(scope="session")
def wind05():
    return make_zermelo(1.0, (0.5, 0.0))


@pytest.fixture(scope="session")
def two_point_field_small(euclid):
    """euclid-two-points at reduced resolution for unit tests."""
    dom = plane_window(-3, 3, -2, 2)
    grid = Grid(dom, 1 / 32)
    cset = ClosedSet([Point((-1.0, 0.0)), Point((1.0, 0.0))])
    return euclid, cset, distance_field(euclid, cset, grid)


@pytest.fixture(scope="session")
def circle_field_small(euclid):
    dom = plane_window(-2, 2, -2, 2)
    grid = Grid(dom, 1 / 32)
    cset = ClosedSet([Circle((0.0, 0.0), 1.0)])
    return euclid, cset, distance_field(euclid, cset, grid)


@pytest.fixture(scope="session")
def torus_point_field(euclid):
    dom = torus(1.0)
    grid = Grid(dom, 1 / 64)
    cset = ClosedSet([Point((0.0, 0.0))])
    return euclid, cset, distance_field(euclid, cset, grid)
