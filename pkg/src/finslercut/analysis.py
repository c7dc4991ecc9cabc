"""Executable verification of the structural properties of the distance
field and the cut locus: the gradient/differentiability characterization,
partition-sum vs integral length, level-set structure with critical levels,
the local-tree/intrinsic-metric battery, and Lipschitz calculus along
chart lines.

Each verifier returns a :class:`VerificationReport` whose checks carry a
residual and the tolerance it was tested against; a report is
deterministic given the caller's random generator seed.
"""

from __future__ import annotations

from dataclasses import dataclass, field as dfield

import numpy as np

from .cutlocus import CutGraph, induced_subgraph_acyclic, intrinsic_distance
from .distance import DistanceField, gradient, min_segments
from .errors import TOutOfRange
from .geodesic import distance as point_distance
from .geodesic import integrate
from .metric import MetricSpec, fundamental_tensor, norm, unit_vector
from .sets import ClosedSet


@dataclass
class Check:
    name: str
    status: bool
    residual: float
    tolerance: float

    def as_dict(self):
        return {"name": self.name, "status": "pass" if self.status else "fail",
                "residual": self.residual, "tolerance": self.tolerance}


@dataclass
class VerificationReport:
    scenario: str
    checks: list = dfield(default_factory=list)
    artifacts: list = dfield(default_factory=list)

    def add(self, name, residual, tolerance, invert=False):
        ok = (residual <= tolerance) if not invert else (residual > tolerance)
        self.checks.append(Check(name, bool(ok), float(residual), float(tolerance)))
        return ok

    @property
    def passed(self) -> bool:
        return all(c.status for c in self.checks)

    def as_dict(self):
        return {"scenario": self.scenario,
                "passed": self.passed,
                "checks": [c.as_dict() for c in self.checks],
                "artifacts": list(self.artifacts)}


# ---------------------------------------------------------------------------
# gradient / differentiability characterization

def _oracle_value(m, cset, field, q):
    """Independent value of the distance function for difference-quotient
    oracles: analytic primitive distances under the Euclidean metric (with
    lattice translates on a torus), the sample evaluator otherwise (which
    is staircase-free for point sets)."""
    if m.kind == "euclidean":
        q = np.asarray(q, dtype=float)
        shifts = field.domain.lattice_shifts(2)
        vals = [cset.exact_distance(q - s) for s in shifts]
        return np.min(vals, axis=0)
    return field.value_at(q)


def _fd_gradient(m, cset, field, q, delta):
    out = np.empty(2)
    for k, e in enumerate(np.eye(2)):
        out[k] = ((_oracle_value(m, cset, field, q + delta * e)
                   - _oracle_value(m, cset, field, q - delta * e)) / (2 * delta))
    return out


def verify_gradient(m: MetricSpec, cset: ClosedSet, field: DistanceField,
                    graph: CutGraph | None, rng: np.random.Generator,
                    n_samples: int = 400, residual_tol: float = 1e-3,
                    gap_floor: float = 0.5) -> VerificationReport:
    """At smooth nodes the finite-difference gradient of the field must match
    the covector g_X(X, .) of the unique segment; at multi-segment nodes the
    candidate covectors must witness non-differentiability by disagreeing.
    """
    rep = VerificationReport("gradient")
    grid = field.grid
    h = grid.h
    pts = grid.points()

    cut_pts = None
    if graph is not None and (graph.nodes or graph.edges):
        cp = [n.pos for n in graph.nodes]
        for e in graph.edges:
            cp.extend(e.polyline)
        cut_pts = np.array(cp)

    def dist_to_cut(q):
        if cut_pts is None:
            return np.inf
        disp = grid.domain.displacement(q, cut_pts)
        return float(np.min(np.hypot(disp[:, 0], disp[:, 1])))

    # smooth samples: away from the set and the cut locus
    delta = min(1e-4, h / 4)
    good = total = 0
    worst = 0.0
    tried = 0
    while total < n_samples and tried < 20 * n_samples:
        tried += 1
        i = int(rng.integers(2, grid.nx - 2))
        j = int(rng.integers(2, grid.ny - 2))
        q = pts[i, j]
        if field.inside[i, j] or field.values[i, j] <= 3 * h:
            continue
        if dist_to_cut(q) < 3 * h:
            continue
        info = gradient(m, cset, field, q)
        if not info.unique:
            continue
        total += 1
        fd = _fd_gradient(m, cset, field, q, delta)
        scale = max(np.linalg.norm(fd), 1e-9)
        resid = float(np.linalg.norm(fd - info.covectors[0]) / scale)
        worst = max(worst, resid)
        if resid < residual_tol:
            good += 1
    rate = good / max(total, 1)
    rep.add("gradient_match_rate", 1.0 - rate, 0.01)
    rep.add("gradient_worst_residual", worst, 10 * residual_tol)

    # non-differentiability witnesses on the cut locus
    if cut_pts is not None and len(cut_pts):
        n_w = min(60, len(cut_pts))
        idx = rng.choice(len(cut_pts), size=n_w, replace=False)
        min_gap = np.inf
        fd_gap_err = 0.0
        for q in cut_pts[idx]:
            fan = min_segments(m, cset, q, field=field, slack=field.slack_wide)
            if fan.multiplicity < 2:
                continue
            covs = []
            for seg in fan.segments[:4]:
                X = seg.terminal_velocity
                covs.append(fundamental_tensor(m, q, X) @ X)
            gap = 0.0
            for a in range(len(covs)):
                for b in range(a + 1, len(covs)):
                    gap = max(gap, float(np.max(np.abs(covs[a] - covs[b]))))
            min_gap = min(min_gap, gap)
            # one-sided difference quotients across the interface; the step
            # must clear the sub-cell refinement offset of q
            v = covs[0] - covs[1]
            v = v / max(np.linalg.norm(v), 1e-12)
            dw = h / 2
            dq_f = (_oracle_value(m, cset, field, q + dw * v)
                    - _oracle_value(m, cset, field, q)) / dw
            dq_b = (_oracle_value(m, cset, field, q)
                    - _oracle_value(m, cset, field, q - dw * v)) / dw
            measured = abs(dq_f - dq_b)
            predicted = abs(float(np.dot(covs[0] - covs[1], v)))
            fd_gap_err = max(fd_gap_err, abs(measured - predicted))
        if np.isfinite(min_gap):
            rep.add("witness_gap_min", gap_floor - min_gap, 0.0, invert=False)
            rep.add("witness_gap_fd_consistency", fd_gap_err, 0.2 + 4 * h * field.lip)
    return rep


# ---------------------------------------------------------------------------
# lengths

def verify_lengths(m: MetricSpec, paths, rep_name: str = "lengths",
                   tol: float = 1e-3) -> VerificationReport:
    """Partition-sum length vs integral of the norm along sampled curves.
    Unit-speed inputs also report the worst speed drift."""
    rep = VerificationReport(rep_name)
    worst = 0.0
    worst_speed = 0.0
    for path in paths:
        ts = np.linspace(0.0, path.length, max(64, 4 * len(path.t)))
        pts = path.point_at(ts)
        steps = np.diff(pts, axis=0)
        if m.is_constant:
            seg = norm(m, pts[:-1], steps)
        else:
            mids = pts[:-1] + 0.5 * steps
            seg = (norm(m, pts[:-1], steps) + 4 * norm(m, mids, steps)
                   + norm(m, pts[1:], steps)) / 6.0
        l_sum = float(np.sum(seg))
        vel = path.velocity_at(ts)
        speeds = norm(m, pts, vel)
        L_int = float(np.trapezoid(speeds, ts))
        worst = max(worst, abs(l_sum - L_int) / max(L_int, 1e-12))
        worst_speed = max(worst_speed, float(np.max(np.abs(speeds - 1.0))))
    rep.add("partition_vs_integral", worst, tol)
    rep.add("unit_speed_drift", worst_speed, 1e-4)
    return rep


def sample_geodesics(m: MetricSpec, field: DistanceField,
                     rng: np.random.Generator, count: int = 20):
    """Random unit-speed geodesics inside the window for length checks."""
    dom = field.domain
    ext = min(dom.xmax - dom.xmin, dom.ymax - dom.ymin)
    out = []
    tries = 0
    while len(out) < count and tries < 20 * count:
        tries += 1
        p = np.array([rng.uniform(dom.xmin + 0.3 * ext, dom.xmax - 0.3 * ext),
                      rng.uniform(dom.ymin + 0.3 * ext, dom.ymax - 0.3 * ext)])
        th = rng.uniform(0, 2 * np.pi)
        v = unit_vector(m, p, th)
        try:
            out.append(integrate(m, p, v, 0.25 * ext, tol=1e-10,
                                 domain=None if dom.is_torus else dom))
        except Exception:
            continue
    return out


# ---------------------------------------------------------------------------
# level sets

@dataclass
class LevelSet:
    t: float
    components: list   # polylines (k, 2)
    closed: list       # bool per component
    critical: bool
    max_multiplicity: int

    def as_dict(self):
        return {"t": self.t,
                "count": len(self.components),
                "closed": [bool(c) for c in self.closed],
                "critical": bool(self.critical),
                "max_multiplicity": int(self.max_multiplicity),
                "components": [[[float(x), float(y)] for x, y in poly]
                               for poly in self.components]}


def _criticality_residual(m, q, velocities, n_fan: int = 32) -> float:
    """max over probe directions of min over segment velocities of
    g_Y(Y, v): <= 0 exactly at a critical point of the field."""
    th = np.linspace(0, 2 * np.pi, n_fan, endpoint=False)
    probes = np.stack([np.cos(th), np.sin(th)], axis=-1)
    worst = -np.inf
    for v in probes:
        best = np.inf
        for Y in velocities:
            g = fundamental_tensor(m, q, Y)
            best = min(best, float(Y @ g @ v))
        worst = max(worst, best)
    return worst


def level_sets(field: DistanceField, t: float, m: MetricSpec, cset: ClosedSet,
               crit_tol: float = 1e-3, probe_stride: int = 4) -> LevelSet:
    """Marching extraction of the level set {d = t} with component count and
    the criticality test: t is critical when some level point admits
    segments whose velocities block every probe direction.

    At grid resolution the test tolerance is floored at 2h * Lip because an
    extracted vertex sits up to a cell away from the true critical point.
    Components are counted within the chart window; on a torus a curve that
    wraps the seam is reported as its window pieces.
    """
    from skimage import measure

    vmax = float(np.max(field.values[np.isfinite(field.values)]))
    if not (0.0 < t < vmax):
        raise TOutOfRange(f"level {t} outside (0, {vmax:.6g})")
    grid = field.grid
    contours = measure.find_contours(field.values, t)
    comps = []
    closed = []
    for c in contours:
        pts = grid.origin + c[:, :2] * grid.h  # index coords -> chart
        comps.append(pts)
        closed.append(bool(np.allclose(c[0], c[-1])))

    tol_eff = max(crit_tol, 2.0 * grid.h * field.lip)
    critical = False
    max_mult = 0
    for pts in comps:
        for q in pts[::probe_stride]:
            fan = min_segments(m, cset, q, field=field)
            mult = fan.multiplicity if not fan.continuum else 64
            max_mult = max(max_mult, mult)
            # criticality probes the whole near-minimal shell: the extracted
            # vertex sits up to a cell away from the true critical point
            wide = min_segments(m, cset, q, field=field, slack=field.slack_wide)
            if wide.multiplicity >= 2:
                vels = [s.terminal_velocity for s in wide.segments]
                if _criticality_residual(m, q, vels) <= tol_eff:
                    critical = True
    return LevelSet(float(t), comps, closed, critical, max_mult)


def critical_values(m: MetricSpec, cset: ClosedSet, field: DistanceField,
                    graph: CutGraph, crit_tol: float = 1e-3) -> list:
    """Field values flagged as potentially critical: criticality-test hits
    on the graph, branch-point levels and multi-segment endpoint levels.
    The complement is the operational 'almost every level' set."""
    flagged = []
    tol_eff = max(crit_tol, 2.0 * field.grid.h * field.lip)
    samples = [(n.pos, n) for n in graph.nodes if not n.synthetic]
    for e in graph.edges:
        for q in e.polyline[:: max(len(e.polyline) // 8, 1)]:
            samples.append((q, None))
    for q, node in samples:
        val = float(field.value_at(q))
        if node is not None and (node.kind == "branch"
                                 or (node.kind == "endpoint" and node.multiplicity >= 2)):
            flagged.append(val)
            continue
        wide = min_segments(m, cset, q, field=field, slack=field.slack_wide)
        if wide.multiplicity >= 2:
            vels = [s.terminal_velocity for s in wide.segments]
            if _criticality_residual(m, q, vels) <= tol_eff:
                flagged.append(val)
    return sorted(set(round(v, 9) for v in flagged))


def is_flagged(t: float, flagged, margin: float) -> bool:
    return any(abs(t - v) <= margin for v in flagged)


# ---------------------------------------------------------------------------
# structure battery

def structure_report(m: MetricSpec, cset: ClosedSet, field: DistanceField,
                     graph: CutGraph, rng: np.random.Generator,
                     n_balls: int = 50, n_pairs: int = 200,
                     n_walks: int = 20) -> VerificationReport:
    """Local-tree balls, density of multi-segment points, delta vs d,
    topology and completeness surrogates, and the arc-decomposition count."""
    rep = VerificationReport("structure")
    dom = graph.domain
    h = graph.grid_h
    r0 = 10 * h

    violations = 0
    for _ in range(n_balls):
        c = np.array([rng.uniform(dom.xmin, dom.xmax),
                      rng.uniform(dom.ymin, dom.ymax)])
        if not dom.is_torus:
            # keep the ball inside the window so it is contractible and fully seen
            c = np.clip(c, [dom.xmin + r0, dom.ymin + r0],
                        [dom.xmax - r0, dom.ymax - r0])
        if not induced_subgraph_acyclic(graph, c, r0):
            violations += 1
    rep.add("local_tree_violations", float(violations), 0.0)

    mi = graph.micro()
    verts = mi["verts"]
    if len(verts) >= 2:
        # density: every graph point near a multiplicity>=2 point
        idx = rng.choice(len(verts), size=min(40, len(verts)), replace=False)
        worst = 0.0
        for q in verts[idx]:
            fan = min_segments(m, cset, q, field=field)
            if fan.multiplicity >= 2 or fan.continuum:
                continue
            others = verts[np.ones(len(verts), dtype=bool)]
            disp = dom.displacement(q, others)
            dd = np.sort(np.hypot(disp[:, 0], disp[:, 1]))
            worst = max(worst, float(dd[1]) if len(dd) > 1 else np.inf)
        rep.add("density_mult2_within", worst, 2 * h)

        # delta >= d and the topology surrogate on nearby same-component pairs
        comp_of_vert = _component_of_vertices(graph)
        worst_gap = 0.0
        worst_ratio = 0.0
        done = 0
        tries = 0
        while done < n_pairs and tries < 40 * n_pairs:
            tries += 1
            a, b = rng.integers(0, len(verts), 2)
            if a == b or comp_of_vert[a] != comp_of_vert[b]:
                continue
            pa, pb = verts[a], verts[b]
            dd = point_distance(m, pa, pb, domain=dom)
            if dd == 0:
                continue
            de = intrinsic_distance(graph, pa, pb)
            if not np.isfinite(de):
                continue
            done += 1
            worst_gap = max(worst_gap, dd - de)
            if dd <= 3 * h:
                worst_ratio = max(worst_ratio, de / h)
        rep.add("delta_lower_bounds_d", worst_gap, 2 * field.field_tol)
        rep.checks.append(Check("topology_surrogate_K", True, worst_ratio, np.inf))

        # completeness surrogate: greedy shrinking-step walks end on the graph
        escaped = 0
        for _ in range(n_walks):
            k = int(rng.integers(0, len(verts)))
            p = verts[k]
            step = 8 * h
            for _ in range(12):
                disp = dom.displacement(p, verts)
                dd = np.hypot(disp[:, 0], disp[:, 1])
                dd[dd > step] = np.inf
                dd[dd == 0] = np.inf
                if np.all(np.isinf(dd)):
                    break
                p = verts[int(np.argmin(dd))]
                step *= 0.5
            disp = dom.displacement(p, verts)
            if float(np.min(np.hypot(disp[:, 0], disp[:, 1]))) > 2 * h:
                escaped += 1
        rep.add("completeness_walk_escapes", float(escaped), 0.0)

    n_arcs = len(graph.edges)
    rep.checks.append(Check("arc_count", True, float(n_arcs), np.inf))
    rep.checks.append(Check("component_count", True, float(graph.n_components), np.inf))
    return rep


def _component_of_vertices(graph: CutGraph):
    mi = graph.micro()
    n = len(mi["verts"])
    comp = -np.ones(n, dtype=int)
    cid = 0
    for s in range(n):
        if comp[s] >= 0:
            continue
        stack = [s]
        comp[s] = cid
        while stack:
            u = stack.pop()
            for v, _ in mi["adj"][u]:
                if comp[v] < 0:
                    comp[v] = cid
                    stack.append(v)
        cid += 1
    return comp


# ---------------------------------------------------------------------------
# Lipschitz calculus along chart lines

def lipschitz_report(m: MetricSpec, cset: ClosedSet, field: DistanceField,
                     rng: np.random.Generator, n_lines: int = 8,
                     n_samples: int = 400) -> VerificationReport:
    """Along straight chart lines: the integral of the derivative of the
    field recovers the endpoint difference (fundamental theorem, kinks are
    measure zero), and the derivative never exceeds the speed F(dir)."""
    rep = VerificationReport("lipschitz")
    dom = field.domain
    worst_ftc = 0.0
    worst_bound = -np.inf
    for _ in range(n_lines):
        a = np.array([rng.uniform(dom.xmin, dom.xmax),
                      rng.uniform(dom.ymin, dom.ymax)])
        b = np.array([rng.uniform(dom.xmin, dom.xmax),
                      rng.uniform(dom.ymin, dom.ymax)])
        if np.allclose(a, b):
            continue
        ts = np.linspace(0.0, 1.0, n_samples)
        pts = a[None, :] + ts[:, None] * (b - a)[None, :]
        vel = b - a
        f = np.asarray(_oracle_value(m, cset, field, pts))
        speed = float(norm(m, a, vel))

        # derivative from the gradient covector where a unique segment exists
        deriv = np.gradient(f, ts)
        inside = cset.contains(pts, eps=field.eps)
        for k in range(0, n_samples, 16):
            if inside[k] or f[k] <= 2 * field.grid.h:
                continue
            fan = min_segments(m, cset, pts[k], field=field)
            if fan.multiplicity == 1:
                X = fan.segments[0].terminal_velocity
                g = fundamental_tensor(m, pts[k], X)
                deriv[k] = float(X @ g @ vel)
                worst_bound = max(worst_bound, deriv[k] - speed)
        integral = float(np.trapezoid(deriv, ts))
        err = abs(integral - (f[-1] - f[0])) / max(abs(f[-1] - f[0]), speed * 0.1)
        worst_ftc = max(worst_ftc, err)
    rep.add("fundamental_theorem", worst_ftc, 0.05)
    rep.add("derivative_speed_bound", worst_bound, 1e-6)
    return rep
