"""Acceptance criteria, one test per criterion, each printing a PASS/FAIL
line.  Scenario artifacts (field + graph) are built once per session at the
bundled configuration; criterion 1 measures its own build time.

Run with ``pytest tests/test_acceptance.py -v -s`` to see the lines.
"""

import time

import numpy as np

from finslercut.analysis import critical_values, is_flagged, level_sets, verify_lengths
from finslercut.analysis import sample_geodesics
from finslercut.cutlocus import extract_graph, induced_subgraph_acyclic, intrinsic_distance
from finslercut.cli import bundled_scenarios, parse_config
from finslercut.distance import distance_field, min_segments, reversibility
from finslercut.geodesic import distance as point_distance
from finslercut.geodesic import jacobi
from finslercut.metric import fundamental_tensor, make_euclidean, make_zermelo

import oracles

_BUILDS = {}


def _build(name):
    if name not in _BUILDS:
        sc = parse_config(name)
        t0 = time.perf_counter()
        field = distance_field(sc.metric, sc.cset, sc.grid())
        t_field = time.perf_counter() - t0
        graph = extract_graph(sc.metric, sc.cset, field)
        _BUILDS[name] = (sc, field, graph, t_field)
    return _BUILDS[name]


def _report(num, name, ok, detail=""):
    print(f"\nACCEPTANCE {num:2d} {name:<28s}: {'PASS' if ok else 'FAIL'}  {detail}")
    assert ok, f"criterion {num} ({name}): {detail}"


# ---------------------------------------------------------------------------

def test_criterion_1_zermelo_field_accuracy():
    sc, field, _, t_field = _build("randers-wind05-point")
    assert field.grid.shape == (256, 256)
    pts = field.grid.points()

    # oracle: bisection on |q - t W| = t, vectorized over all nodes
    W = np.array([0.5, 0.0])
    r = np.linalg.norm(pts, axis=-1)
    lo = np.full(r.shape, 1e-9)
    hi = np.full(r.shape, 1e3)
    for _ in range(60):
        mid = 0.5 * (lo + hi)
        gap = np.linalg.norm(pts - mid[..., None] * W, axis=-1) - mid
        lo = np.where(gap > 0, mid, lo)
        hi = np.where(gap > 0, hi, mid)
    exact = 0.5 * (lo + hi)

    mask = r > 1e-9
    rel = np.abs(field.values - exact)[mask] / exact[mask]
    ok = rel.max() < 1e-2 and t_field < 30.0
    _report(1, "zermelo field", ok,
            f"max rel err {rel.max():.2e} (tol 1e-2), build {t_field:.1f}s (tol 30s)")


def test_criterion_2_gradient_characterization():
    sc, field, graph, _ = _build("euclid-two-points")
    m, cset = sc.metric, sc.cset
    grid = field.grid
    h = grid.h
    rng = np.random.default_rng(sc.seed)
    pts = grid.points()

    good = total = 0
    delta = 1e-4
    while total < 500:
        i = int(rng.integers(1, grid.nx - 1))
        j = int(rng.integers(1, grid.ny - 1))
        q = pts[i, j]
        if abs(q[0]) <= 3 * h or field.values[i, j] <= 3 * h:
            continue
        fan = min_segments(m, cset, q, field=field)
        if fan.multiplicity != 1:
            continue
        total += 1
        X = fan.segments[0].terminal_velocity
        cov = fundamental_tensor(m, q, X) @ X
        fd = np.array([
            (field.value_at(q + delta * e) - field.value_at(q - delta * e)) / (2 * delta)
            for e in np.eye(2)])
        if np.linalg.norm(fd - cov) / max(np.linalg.norm(fd), 1e-12) < 1e-3:
            good += 1
    rate = good / total

    # bisector nodes: non-differentiability witness gaps
    i0 = int(round((0.0 - grid.domain.xmin) / h))
    assert abs(grid.point(i0, 0)[0]) < 1e-12
    gaps = []
    for j in range(1, grid.ny - 1):
        q = pts[i0, j]
        fan = min_segments(m, cset, q, field=field)
        if fan.multiplicity < 2:
            continue
        covs = [fundamental_tensor(m, q, s.terminal_velocity) @ s.terminal_velocity
                for s in fan.segments[:2]]
        gaps.append(max(abs(covs[0][0] - covs[1][0]), abs(covs[0][1] - covs[1][1])))
    witness_ok = len(gaps) > 100 and min(gaps) >= 0.5
    ok = rate >= 0.99 and witness_ok
    _report(2, "gradient characterization", ok,
            f"match rate {rate:.4f} (>=0.99), min witness gap "
            f"{min(gaps):.3f} over {len(gaps)} bisector nodes (>=0.5)")


def test_criterion_3_cut_geometry():
    sc2, field2, graph2, _ = _build("euclid-two-points")
    h2 = field2.grid.h
    allpts = np.vstack([e.polyline for e in graph2.edges]
                       + [[n.pos] for n in graph2.nodes])
    d_to_axis = np.max(np.abs(allpts[:, 0]))
    cover = 0.0
    for y in np.linspace(field2.domain.ymin + h2, field2.domain.ymax - h2, 101):
        cover = max(cover, np.min(np.hypot(allpts[:, 0], allpts[:, 1] - y)))
    haus_ok = d_to_axis < 2 * h2 and cover < 2 * h2

    scc, fieldc, graphc, _ = _build("euclid-circle")
    hc = fieldc.grid.h
    interior = [n for n in graphc.nodes if not n.synthetic]
    circ_ok = (len(interior) == 1 and np.hypot(*interior[0].pos) < 2 * hc
               and interior[0].continuum and len(graphc.edges) == 0)
    ok = haus_ok and circ_ok
    _report(3, "cut locus geometry", ok,
            f"bisector Hausdorff {max(d_to_axis, cover):.4f} (tol {2*h2:.4f}); "
            f"circle: {len(interior)} interior node(s), "
            f"offset {np.hypot(*interior[0].pos):.4f} (tol {2*hc:.4f}), "
            f"continuum={interior[0].continuum}")


def test_criterion_4_local_tree_all_scenarios():
    worst = []
    for name in bundled_scenarios():
        sc, field, graph, _ = _build(name)
        rng = np.random.default_rng(sc.seed + 1)
        r0 = 10 * field.grid.h
        dom = graph.domain
        bad = 0
        for _ in range(50):
            c = np.array([rng.uniform(dom.xmin, dom.xmax),
                          rng.uniform(dom.ymin, dom.ymax)])
            if not dom.is_torus:
                c = np.clip(c, [dom.xmin + r0, dom.ymin + r0],
                            [dom.xmax - r0, dom.ymax - r0])
            if not induced_subgraph_acyclic(graph, c, r0):
                bad += 1
        worst.append((name, bad))
    total_bad = sum(b for _, b in worst)
    _report(4, "local tree", total_bad == 0,
            f"violations per scenario: {worst}")


def test_criterion_5_intrinsic_metric():
    sc, field, graph, _ = _build("torus-point")
    m = sc.metric
    d_cross = intrinsic_distance(graph, [0.5, 0.0], [0.0, 0.5])
    cross_ok = abs(d_cross - 1.0) <= 0.02

    mi = graph.micro()
    verts = mi["verts"]
    rng = np.random.default_rng(sc.seed + 2)
    checked = 0
    worst_gap = -np.inf
    while checked < 500:
        a, b = rng.integers(0, len(verts), 2)
        if a == b:
            continue
        pa, pb = verts[a], verts[b]
        de = intrinsic_distance(graph, pa, pb)
        if not np.isfinite(de):
            continue
        dd = point_distance(m, pa, pb, domain=graph.domain)
        worst_gap = max(worst_gap, dd - de)
        checked += 1
    bound_ok = worst_gap <= 2 * field.field_tol

    sce, fielde, graphe, _ = _build("example26")
    assert graphe.n_components >= 2
    comps = {}
    for n in graphe.nodes:
        comps.setdefault(n.component, n.pos)
    c0, c1 = list(comps.values())[:2]
    inf_ok = intrinsic_distance(graphe, c0, c1) == np.inf

    ok = cross_ok and bound_ok and inf_ok
    _report(5, "intrinsic metric", ok,
            f"delta cross {d_cross:.4f} (1 +- 0.02); worst d-delta gap "
            f"{worst_gap:.2e} (tol {2*field.field_tol:.2e}); "
            f"disconnected pairs inf: {inf_ok}")


def test_criterion_6_partition_length_equals_integral():
    worst = 0.0
    for name in bundled_scenarios():
        sc, field, _, _ = _build(name)
        rng = np.random.default_rng(sc.seed + 3)
        paths = sample_geodesics(sc.metric, field, rng, count=20)
        rep = verify_lengths(sc.metric, paths)
        worst = max(worst, rep.checks[0].residual)
        assert len(paths) == 20
    _report(6, "partition vs integral length", worst < 1e-3,
            f"worst |l-L|/L = {worst:.2e} (tol 1e-3), 20 geodesics x 6 scenarios")


def test_criterion_7_level_sets():
    sc, field, graph, _ = _build("euclid-two-points")
    m, cset = sc.metric, sc.cset
    n05 = level_sets(field, 0.5, m, cset)
    n15 = level_sets(field, 1.5, m, cset)
    crit = level_sets(field, 1.0, m, cset)
    counts_ok = len(n05.components) == 2 and len(n15.components) == 1
    crit_ok = crit.critical and not n05.critical and not n15.critical

    flagged = critical_values(m, cset, field, graph)
    mult_ok = True
    worst_mult = 0
    for t in (0.3, 0.5, 0.8, 1.2, 1.5, 1.8):
        if is_flagged(t, flagged, 2 * field.grid.h):
            continue
        ls = level_sets(field, t, m, cset)
        worst_mult = max(worst_mult, ls.max_multiplicity)
        mult_ok = mult_ok and ls.max_multiplicity <= 2
    ok = counts_ok and crit_ok and mult_ok
    _report(7, "level set structure", ok,
            f"counts ({len(n05.components)}@0.5, {len(n15.components)}@1.5), "
            f"critical@1.0={crit.critical}, max mult {worst_mult} off flagged levels")


def test_criterion_8_accumulating_bite_centers():
    sc, field, graph, _ = _build("example26")
    m, cset = sc.metric, sc.cset
    centers = oracles.example26_centers(6)

    allpts = [n.pos for n in graph.nodes]
    for e in graph.edges:
        allpts.extend(e.polyline)
    allpts = np.array(allpts)
    dists = []
    for n in range(4):
        q = centers[n]
        dists.append(float(np.min(np.hypot(allpts[:, 0] - q[0], allpts[:, 1] - q[1]))))
    centers_ok = max(dists) < 0.05

    fan = min_segments(m, cset, [2.0, 0.0], field=field)
    mult_ok = fan.multiplicity == 1 and not fan.continuum
    foot_ok = np.hypot(fan.segments[0].foot[0] - 1.0, fan.segments[0].foot[1]) < 0.05
    ok = centers_ok and mult_ok and foot_ok
    _report(8, "accumulating bite centers", ok,
            f"center distances n=1..4: {[f'{d:.3f}' for d in dists]} (tol 0.05); "
            f"(2,0) multiplicity {fan.multiplicity} foot ~ (1,0): {foot_ok}")


def test_criterion_9_reversibility():
    sc, _, _, _ = _build("randers-wind05-point")
    rng = np.random.default_rng(sc.seed + 4)
    lam = reversibility(sc.metric, (-2, 2, -2, 2), n_pairs=1000, rng=rng)
    ok = 2.9 <= lam <= 3.01
    _report(9, "reversibility bound", ok, f"lambda = {lam:.4f} in [2.9, 3.01]")


def test_criterion_10_jacobi_richardson():
    ratios = {}
    for name, m in (("euclidean", make_euclidean()),
                    ("randers", make_zermelo(1.0, (0.5, 0.0)))):
        sups = []
        for h in (0.2, 0.1, 0.05):
            _, sup = jacobi(m, [0.05, -0.1], theta=0.7, t_max=1.0, h_theta=h)
            sups.append(sup)
        ratios[name] = (sups[0] - sups[1]) / (sups[1] - sups[2])
    ok = all(3.5 <= r <= 4.5 for r in ratios.values())
    _report(10, "jacobi O(h^2) Richardson", ok,
            f"ratios {dict((k, round(v, 3)) for k, v in ratios.items())} in [3.5, 4.5]")
