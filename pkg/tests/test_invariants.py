"""Bulk invariant sweeps at the sample counts the module contracts name."""

import numpy as np
import pytest

from finslercut import make_zermelo, norm
from finslercut.chart import Grid, plane_window
from finslercut.cutlocus import AmbiguousJunction, Crossing, Detection, extract_graph
from finslercut.distance import distance_field, first_variation_probe, min_segments
from finslercut.errors import GridTooCoarse
from finslercut.geodesic import exponential, log
from finslercut.metric import RasterField, fundamental_tensor
from finslercut.sets import ClosedSet, Point


def test_homogeneity_thousand_samples():
    m = make_zermelo(np.array([[1.2, 0.1], [0.1, 0.9]]), (0.35, -0.25))
    rng = np.random.default_rng(0)
    x = rng.uniform(-1, 1, size=(1000, 2))
    v = rng.normal(size=(1000, 2))
    lam = rng.uniform(1e-3, 50, size=1000)
    F = norm(m, x, v)
    Fs = norm(m, x, lam[:, None] * v)
    assert np.all(np.abs(Fs - lam * F) < 1e-9 * lam * F + 1e-15)


def test_tensor_identity_thousand_samples():
    m = make_zermelo(1.0, (0.5, 0.0))
    rng = np.random.default_rng(1)
    x = rng.uniform(-1, 1, size=(1000, 2))
    v = rng.normal(size=(1000, 2))
    F = norm(m, x, v)
    g = fundamental_tensor(m, x, v)
    gvv = np.einsum("ni,nij,nj->n", v, g, v)
    assert np.max(np.abs(gvv - F**2) / F**2) < 1e-6
    eig = np.linalg.eigvalsh(g)
    assert eig.min() > 0


def test_exp_log_five_hundred_pairs():
    m = make_zermelo(1.0, (0.4, 0.2))
    rng = np.random.default_rng(2)
    for _ in range(500):
        p = rng.uniform(-1, 1, size=2)
        q = p + rng.uniform(-0.5, 0.5, size=2)
        if np.allclose(p, q):
            continue
        v = log(m, p, q)
        assert np.allclose(exponential(m, p, v), q, atol=1e-9)


def test_smoothness_proxy_implies_unique_segment(two_point_field_small):
    # Richardson-consistent central differences (halving the step shrinks
    # the change ~4x) certify a smooth node; those must be single-segment
    m, cset, field = two_point_field_small
    rng = np.random.default_rng(3)
    grid = field.grid
    pts = grid.points()
    checked = 0
    tried = 0
    while checked < 60 and tried < 4000:
        tried += 1
        i = int(rng.integers(2, grid.nx - 2))
        j = int(rng.integers(2, grid.ny - 2))
        q = pts[i, j]
        if field.inside[i, j] or field.values[i, j] < 4 * grid.h:
            continue

        def fd(delta):
            return np.array([(field.value_at(q + delta * e) - field.value_at(q - delta * e))
                             / (2 * delta) for e in np.eye(2)])

        g1, g2, g4 = fd(grid.h), fd(grid.h / 2), fd(grid.h / 4)
        num = np.linalg.norm(g1 - g2)
        den = np.linalg.norm(g2 - g4)
        if den < 1e-14 or not (3.5 <= num / den <= 4.5):
            continue
        checked += 1
        fan = min_segments(m, cset, q, field=field)
        assert fan.multiplicity == 1, q
    assert checked >= 30


def test_probe_residual_monotone_decrease(euclid):
    dom = plane_window(-2.5, 2.5, -2.5, 2.5)
    grid = Grid(dom, 1 / 32)
    cset = ClosedSet([Point((0.0, 0.0))])
    field = distance_field(euclid, cset, grid)
    x = np.array([1.0, 0.0])
    approach = [np.array([np.cos(t), np.sin(t)])
                for t in (1 / 4, 1 / 8, 1 / 16, 1 / 32, 1 / 64, 1 / 128)]
    res = first_variation_probe(euclid, cset, x, approach, field=field)
    fan = min_segments(euclid, cset, x, field=field)
    w = fan.segments[0].terminal_velocity
    # per-step residual against the first-variation pairing must shrink
    per_step = []
    for k, p in enumerate(approach):
        vf = (p - x) / np.linalg.norm(p - x)
        per_step.append(abs(res.quotients[k] - float(w @ vf)))
    assert per_step[-1] < per_step[-2] < per_step[-3]


def test_grid_too_coarse_raised():
    # wind raster oscillating far below the grid scale
    n = 9
    xs = np.linspace(-1, 1, n)
    wx = 0.8 * np.sign(np.sin(40 * xs))[:, None] * np.ones((n, n))
    w1 = RasterField((-1, -1), 2 / (n - 1), wx)
    w2 = RasterField((-1, -1), 2 / (n - 1), np.zeros((n, n)))
    dom = plane_window(-1, 1, -1, 1)
    m = make_zermelo(1.0, (w1, w2), domain=dom)
    grid = Grid(dom, 0.5)  # cells far wider than the raster oscillation
    with pytest.raises(GridTooCoarse):
        distance_field(m, ClosedSet([Point((0.0, 0.0))]), grid)


def test_wind_raster_field_matches_constant_case():
    # a constant raster must reproduce the constant-wind metric
    n = 5
    mk = lambda c: RasterField((-2, -2), 1.0, np.full((n, n), c))
    dom = plane_window(-2, 2, -2, 2)
    m_r = make_zermelo(1.0, (mk(0.5), mk(0.0)), domain=dom)
    m_c = make_zermelo(1.0, (0.5, 0.0))
    rng = np.random.default_rng(4)
    pts = rng.uniform(-1.5, 1.5, size=(50, 2))
    vs = rng.normal(size=(50, 2))
    assert np.allclose(norm(m_r, pts, vs), norm(m_c, pts, vs), rtol=1e-12)
    grid = Grid(dom, 1 / 8)
    field = distance_field(m_r, ClosedSet([Point((0.0, 0.0))]), grid)
    i1 = int(round((1 - dom.xmin) / grid.h))
    j0 = int(round((0 - dom.ymin) / grid.h))
    assert field.values[i1, j0] == pytest.approx(2 / 3, rel=0.03)


def test_ambiguous_junction_raised(two_point_field_small):
    m, cset, field = two_point_field_small
    fake = [Crossing(0, 5, 5, np.array([0.0, 0.0])) for _ in range(9)]
    det = Detection(fake, set(), np.zeros(field.grid.shape, dtype=bool),
                    np.deg2rad(5))
    with pytest.raises(AmbiguousJunction):
        extract_graph(m, cset, field, det)


def test_geodesic_csv_export(tmp_path, euclid):
    from finslercut.geodesic import integrate

    path = integrate(euclid, [0, 0], [1, 0], 1.0)
    f = tmp_path / "path.csv"
    path.to_csv(f)
    lines = f.read_text().splitlines()
    assert lines[0] == "t,x,y,v1,v2"
    last = [float(t) for t in lines[-1].split(",")]
    assert last[0] == pytest.approx(1.0)
    assert last[1] == pytest.approx(1.0)


def test_field_zero_exactly_on_set_band(circle_field_small):
    _, cset, field = circle_field_small
    pts = field.grid.points()
    r = np.abs(np.linalg.norm(pts, axis=-1) - 1.0)
    on_band = r <= field.eps
    assert np.all(field.values[on_band] == 0.0)
    assert np.all(field.values[~on_band] > 0.0)


def test_multiplicity_column_marked(two_point_field_small):
    m, cset, field = two_point_field_small
    extract_graph(m, cset, field)
    grid = field.grid
    i0 = int(round((0.0 - grid.domain.xmin) / grid.h))
    band = field.multiplicity[i0 - 1:i0 + 2, :]
    assert np.any(band >= 2)
    far = field.multiplicity[:i0 - 10, :]
    assert np.all(far <= 1)