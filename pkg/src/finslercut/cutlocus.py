"""Cut locus extraction: detection of cut points on the grid, sub-cell
interface tracing, graph assembly, sectors, arc lengths and the intrinsic
quasi-distance on the graph.

Detection rests on the distance field's nearest-foot records.  An edge of
the grid crosses the cut locus when the terminal direction jumps by more
than the cluster tolerance *and* the feet are genuinely different parts of
the set; bisection to 1e-3 of a cell refines the crossing and discards
smooth-but-fast rotation (the jump must persist at the finest bracket).
Cells where the direction field spreads over more than a quarter turn
without any surviving crossing are focal candidates (continuum points);
cells owning three or more crossings are junctions.
"""

from __future__ import annotations

import heapq
import json
from dataclasses import dataclass, field as dfield

import numpy as np

from .chart import Domain
from .distance import DistanceField, min_segments
from .errors import AmbiguousJunction, PointNotOnGraph
from .metric import MetricSpec, fundamental_tensor, norm
from .sets import ClosedSet

BISECT_ITERS = 10          # bracket shrinks to 2^-10 ~ 1e-3 of a cell
FOOT_GAP_CELLS = 3.0       # feet must differ by this many eps to be distinct
FOCAL_SPREAD = np.pi / 2   # direction spread marking a focal candidate cell
NEAR_SET_CELLS = 2.0       # detection exclusion zone around the set


@dataclass
class Sector:
    a0: float
    a1: float
    mu: float


@dataclass
class CutNode:
    id: int
    pos: np.ndarray
    multiplicity: int
    sectors: list
    kind: str                # endpoint | regular | branch
    continuum: bool = False
    synthetic: bool = False  # window-boundary artifact, not a cut endpoint
    component: int = -1
    degree: int = 0


@dataclass
class CutEdge:
    id: int
    n0: int
    n1: int
    polyline: np.ndarray     # (k, 2) wrapped chart points
    len_fwd: float
    len_bwd: float


@dataclass
class CutGraph:
    nodes: list
    edges: list
    domain: Domain
    grid_h: float
    _micro: dict | None = dfield(default=None, repr=False)

    @property
    def n_components(self) -> int:
        return len({n.component for n in self.nodes}) if self.nodes else 0

    # -- micro-graph (polyline vertices) for path queries ------------------

    def micro(self) -> dict:
        if self._micro is None:
            verts = []
            adj = {}

            def add_vertex(pos):
                verts.append(np.asarray(pos, float))
                adj[len(verts) - 1] = []
                return len(verts) - 1

            node_vid = {n.id: add_vertex(n.pos) for n in self.nodes}
            for e in self.edges:
                pts = e.polyline
                chain = [node_vid[e.n0]]
                for k in range(1, len(pts) - 1):
                    chain.append(add_vertex(pts[k]))
                chain.append(node_vid[e.n1])
                for a, b, cf, cb in zip(chain[:-1], chain[1:],
                                        e._seg_fwd, e._seg_bwd):
                    adj[a].append((b, cf))
                    adj[b].append((a, cb))
            self._micro = {"verts": np.array(verts) if verts else np.zeros((0, 2)),
                           "adj": adj, "node_vid": node_vid}
        return self._micro

    def locate(self, p, tol: float | None = None) -> int:
        """Micro-vertex nearest to p; raises PointNotOnGraph beyond tol."""
        m = self.micro()
        if len(m["verts"]) == 0:
            raise PointNotOnGraph("empty graph")
        tol = 2.0 * self.grid_h if tol is None else tol
        disp = self.domain.displacement(np.asarray(p, float), m["verts"])
        d = np.hypot(disp[:, 0], disp[:, 1])
        k = int(np.argmin(d))
        if d[k] > tol:
            raise PointNotOnGraph(f"nearest graph point at {d[k]:.4g} > {tol:.4g}")
        return k

    def to_json(self, path=None):
        obj = {
            "nodes": [{
                "id": n.id, "x": float(n.pos[0]), "y": float(n.pos[1]),
                "multiplicity": int(n.multiplicity), "kind": n.kind,
                "continuum": bool(n.continuum), "synthetic": bool(n.synthetic),
                "component": int(n.component),
                "sectors": [{"a0": s.a0, "a1": s.a1, "mu": s.mu} for s in n.sectors],
            } for n in self.nodes],
            "edges": [{
                "id": e.id, "n0": e.n0, "n1": e.n1,
                "polyline": [[float(x), float(y)] for x, y in e.polyline],
                "len_fwd": e.len_fwd, "len_bwd": e.len_bwd,
            } for e in self.edges],
        }
        if path is not None:
            with open(path, "w") as fh:
                json.dump(obj, fh, sort_keys=True, indent=1)
        return obj


# ---------------------------------------------------------------------------
# detection

@dataclass
class Crossing:
    axis: int
    i: int
    j: int
    pos: np.ndarray     # unwrapped in the frame of node (i, j)


@dataclass
class Detection:
    crossings: list
    focal_cells: set
    extension_flags: np.ndarray
    theta_sep: float


def _dir_angle(u, v):
    """Euclidean angle between direction fields (vectorized)."""
    du = u / np.maximum(np.hypot(u[..., 0], u[..., 1])[..., None], 1e-300)
    dv = v / np.maximum(np.hypot(v[..., 0], v[..., 1])[..., None], 1e-300)
    dot = np.clip(np.sum(du * dv, axis=-1), -1.0, 1.0)
    return np.arccos(dot)


def _g_angles(m, x, u, v):
    g = fundamental_tensor(m, x, u)
    nu = np.sqrt(np.einsum("...i,...ij,...j->...", u, g, u))
    nv = np.sqrt(np.einsum("...i,...ij,...j->...", v, g, v))
    c = np.einsum("...i,...ij,...j->...", u, g, v) / np.maximum(nu * nv, 1e-300)
    return np.arccos(np.clip(c, -1.0, 1.0))


def _differs(m, pos, dir_a, foot_a, dir_b, foot_b, theta_sep, foot_gap):
    ang = _g_angles(m, pos, dir_a, dir_b)
    gap = np.hypot(*(foot_a - foot_b).T) if foot_a.ndim > 1 else np.hypot(*(foot_a - foot_b))
    return (ang > theta_sep) & (gap > foot_gap)


def detect(m: MetricSpec, cset: ClosedSet, field: DistanceField,
           theta_sep: float | None = None, ext_step: float | None = None) -> Detection:
    """Locate cut-locus crossings on grid edges and focal candidate cells.

    A point is treated as a cut point when distinct segment clusters meet
    there (interface between nearest-foot families) or when the unique
    segment loses minimality just beyond it (endpoint flags, used for
    classification and for rescuing isolated points).
    """
    from .distance import THETA_SEP

    theta_sep = THETA_SEP if theta_sep is None else theta_sep
    grid = field.grid
    dom = grid.domain
    h = grid.h
    nx, ny = grid.shape
    pts = grid.points()
    eps = field.eps
    foot_gap = FOOT_GAP_CELLS * 2.0 * eps  # in chart units: 3 h
    valid = (~field.inside) & (field.values > NEAR_SET_CELLS * h)

    crossings: list[Crossing] = []
    for axis in (0, 1):
        off = (1, 0) if axis == 0 else (0, 1)
        if dom.is_torus:
            ia = np.arange(nx)
            ja = np.arange(ny)
        else:
            ia = np.arange(nx - 1) if axis == 0 else np.arange(nx)
            ja = np.arange(ny) if axis == 0 else np.arange(ny - 1)
        II, JJ = np.meshgrid(ia, ja, indexing="ij")
        ib = (II + off[0]) % nx
        jb = (JJ + off[1]) % ny
        ok = valid[II, JJ] & valid[ib, jb]
        da = field.tdir[II, JJ]
        db = field.tdir[ib, jb]
        fa = field.foot[II, JJ]
        fb = field.foot[ib, jb].copy()
        if dom.is_torus:
            # express the b-side foot in the a-node frame across the seam
            wrapped = (II + off[0]) >= nx if axis == 0 else (JJ + off[1]) >= ny
            fb[wrapped] += np.array(off, float) * dom.periods[axis]
        ang = _dir_angle(da, db)
        gap = np.hypot(fb[..., 0] - fa[..., 0], fb[..., 1] - fa[..., 1])
        cand = ok & (ang > 0.5 * theta_sep) & (gap > foot_gap)
        ci, cj = np.nonzero(cand)
        if len(ci) == 0:
            continue
        A = pts[II[ci, cj], JJ[ci, cj]]
        B = A + np.array(off, float) * h
        keep = _refine_crossings(m, field, A, B, theta_sep, foot_gap)
        for k, (mid, good) in enumerate(zip(*keep)):
            if good:
                crossings.append(Crossing(axis, int(II[ci[k], cj[k]]),
                                          int(JJ[ci[k], cj[k]]), mid))

    focal = _focal_cells(m, field, valid, crossings)
    ext = _extension_flags(m, field, valid, ext_step or 2.0 * h)
    return Detection(crossings, focal, ext, theta_sep)


def _refine_crossings(m, field, A, B, theta_sep, foot_gap):
    """Vectorized bisection of candidate edges; a crossing survives only if
    the label jump persists at the finest bracket."""
    n = len(A)
    A = A.copy()
    B = B.copy()
    _, fA, dA = field.query(A)
    _, fB, dB = field.query(B)
    for _ in range(BISECT_ITERS):
        mid = 0.5 * (A + B)
        _, fM, dM = field.query(mid)
        dif = _differs(m, mid, dA, fA, dM, fM, theta_sep, foot_gap)
        # where mid differs from A the crossing lies in [A, mid]
        B[dif] = mid[dif]
        fB[dif] = fM[dif]
        dB[dif] = dM[dif]
        A[~dif] = mid[~dif]
        fA[~dif] = fM[~dif]
        dA[~dif] = dM[~dif]
    final = _differs(m, 0.5 * (A + B), dA, fA, dB, fB, theta_sep, foot_gap)
    return 0.5 * (A + B), final


def _focal_cells(m, field, valid, crossings):
    """Cells with a quarter-turn direction spread and at most one surviving
    crossing: candidates for continuum (focal) points off the node lattice."""
    grid = field.grid
    nx, ny = grid.shape
    torus = grid.domain.is_torus
    ci = np.arange(nx if torus else nx - 1)
    cj = np.arange(ny if torus else ny - 1)
    II, JJ = np.meshgrid(ci, cj, indexing="ij")
    i1 = (II + 1) % nx
    j1 = (JJ + 1) % ny
    ok = valid[II, JJ] & valid[i1, JJ] & valid[i1, j1] & valid[II, j1]
    dmin = np.minimum.reduce([field.values[II, JJ], field.values[i1, JJ],
                              field.values[i1, j1], field.values[II, j1]])
    ok &= dmin > 3.0 * grid.h
    corners = [field.tdir[II, JJ], field.tdir[i1, JJ],
               field.tdir[i1, j1], field.tdir[II, j1]]
    spread = np.zeros(II.shape)
    for a in range(4):
        for b in range(a + 1, 4):
            spread = np.maximum(spread, _dir_angle(corners[a], corners[b]))
    cand = ok & (spread > FOCAL_SPREAD)
    counts = {}
    for c in crossings:
        for cell in _owner_cells(c, nx, ny, torus):
            counts[cell] = counts.get(cell, 0) + 1
    out = set()
    for i, j in zip(*np.nonzero(cand)):
        if counts.get((int(II[i, j]), int(JJ[i, j])), 0) <= 1:
            out.add((int(II[i, j]), int(JJ[i, j])))
    return out


def _extension_flags(m, field, valid, step):
    """Nodes whose segment, extended geodesically by ``step``, stops being
    minimizing: loss-of-minimality flags (endpoint detection rule)."""
    if not m.is_constant:
        return np.zeros(field.grid.shape, dtype=bool)
    pts = field.grid.points()
    ext = pts + step * np.where(np.isnan(field.tdir), 0.0, field.tdir)
    flat = ext.reshape(-1, 2)
    d_ext = np.asarray(field.value_at(flat)).reshape(field.grid.shape)
    return valid & (d_ext < field.values + step - field.field_tol)


def _owner_cells(c: Crossing, nx, ny, torus):
    if c.axis == 0:
        cells = [(c.i, c.j - 1), (c.i, c.j)]
    else:
        cells = [(c.i - 1, c.j), (c.i, c.j)]
    out = []
    for i, j in cells:
        if torus:
            out.append((i % nx, j % ny))
        elif 0 <= i < nx - 1 and 0 <= j < ny - 1:
            out.append((i, j))
    return out


# ---------------------------------------------------------------------------
# graph extraction

def sectors(m: MetricSpec, x, velocities) -> list:
    """Angular sectors between consecutive terminal velocities with the
    separation measure mu = max(g_X(X,Y), g_Y(Y,X)); a single velocity gives
    one full sector with mu = 1."""
    x = np.asarray(x, dtype=float)
    V = np.asarray(velocities, dtype=float)
    if len(V) == 0:
        return []
    ang = np.arctan2(V[:, 1], V[:, 0])
    order = np.argsort(ang)
    out = []
    k = len(V)
    if k == 1:
        a = float(ang[0])
        return [Sector(a, a + 2 * np.pi, 1.0)]
    for idx in range(k):
        X = V[order[idx]]
        Y = V[order[(idx + 1) % k]]
        a0 = float(ang[order[idx]])
        a1 = float(ang[order[(idx + 1) % k]])
        if idx == k - 1:
            a1 += 2 * np.pi
        gX = fundamental_tensor(m, x, X)
        gY = fundamental_tensor(m, x, Y)
        mu = max(float(X @ gX @ Y), float(Y @ gY @ X))
        out.append(Sector(a0, a1, mu))
    return out


def arc_length(m: MetricSpec, polyline, domain: Domain | None = None,
               reverse: bool = False) -> float:
    """Length of a polyline as the sum of distances between consecutive
    vertices (the partition sum whose refinement limit is the true length).
    ``reverse`` walks the polyline from its last vertex to its first."""
    pts = np.asarray(polyline, dtype=float)
    if len(pts) < 2:
        raise ValueError("polyline needs at least 2 points")
    if reverse:
        pts = pts[::-1]
    steps = (np.diff(pts, axis=0) if domain is None
             else domain.displacement(pts[:-1], pts[1:]))
    if m.is_constant:
        return float(np.sum(norm(m, pts[:-1], steps)))
    mids = pts[:-1] + 0.5 * steps
    ends = pts[:-1] + steps
    F = (norm(m, pts[:-1], steps) + 4.0 * norm(m, mids, steps)
         + norm(m, ends, steps)) / 6.0
    return float(np.sum(F))


def _segment_costs(m, pts, domain):
    steps = (np.diff(pts, axis=0) if domain is None or not domain.is_torus
             else domain.displacement(pts[:-1], pts[1:]))
    if m.is_constant:
        fwd = norm(m, pts[:-1], steps)
        bwd = norm(m, pts[:-1] + steps, -steps)
    else:
        mids = pts[:-1] + 0.5 * steps
        ends = pts[:-1] + steps
        fwd = (norm(m, pts[:-1], steps) + 4 * norm(m, mids, steps)
               + norm(m, ends, steps)) / 6.0
        bwd = (norm(m, ends, -steps) + 4 * norm(m, mids, -steps)
               + norm(m, pts[:-1], -steps)) / 6.0
    return np.atleast_1d(fwd), np.atleast_1d(bwd)


def extract_graph(m: MetricSpec, cset: ClosedSet, field: DistanceField,
                  detection: Detection | None = None, cap: int = 64) -> CutGraph:
    """Chain interface crossings into polyline edges, place nodes at
    junction and focal cells and at chain ends, and assemble the graph."""
    if detection is None:
        detection = detect(m, cset, field)
    grid = field.grid
    dom = grid.domain
    nx, ny = grid.shape
    torus = dom.is_torus
    h = grid.h

    cross = detection.crossings
    cells: dict[tuple, list[int]] = {}
    for k, c in enumerate(cross):
        for cell in _owner_cells(c, nx, ny, torus):
            cells.setdefault(cell, []).append(k)
    for cell, ids in cells.items():
        if len(ids) > 8:
            raise AmbiguousJunction(f"cell {cell} carries {len(ids)} crossings")

    # junction/focal cell components -> one node each
    special = {cell for cell, ids in cells.items() if len(ids) >= 3}
    special |= detection.focal_cells
    comp_of = _cell_components(special, nx, ny, torus)

    nodes: list[CutNode] = []
    node_of_cell: dict[tuple, int] = {}
    comp_cells: dict[int, list[tuple]] = {}
    for cell, comp in comp_of.items():
        comp_cells.setdefault(comp, []).append(cell)
    for comp, members in sorted(comp_cells.items()):
        node_pos = _node_position(grid, members, cells, cross)
        nid = len(nodes)
        nodes.append(_make_node(nid, node_pos, m, cset, field, cap))
        for cell in members:
            node_of_cell[cell] = nid

    # link crossings through ordinary cells
    links: dict[int, list] = {k: [] for k in range(len(cross))}
    for cell, ids in cells.items():
        if cell in node_of_cell:
            for k in ids:
                links[k].append(("n", node_of_cell[cell]))
        elif len(ids) == 2:
            links[ids[0]].append(("c", ids[1]))
            links[ids[1]].append(("c", ids[0]))
        # single-crossing cells terminate a chain there

    edges: list[CutEdge] = []
    visited = set()

    def crossing_pos(k):
        return dom.wrap(cross[k].pos)

    def walk(start_k, first_link):
        chain = [start_k]
        cur = first_link
        while cur[0] == "c":
            k = cur[1]
            chain.append(k)
            nxt = [l for l in links[k] if not (l[0] == "c" and l[1] == chain[-2])]
            if not nxt:
                return chain, None
            cur = nxt[0]
        return chain, cur[1]

    def ensure_end_node(k):
        nid = len(nodes)
        nodes.append(_make_node(nid, crossing_pos(k), m, cset, field, cap))
        return nid

    def add_edge(n0, n1, pts):
        pts = np.asarray(pts)
        if len(pts) < 2:
            return
        e = CutEdge(len(edges), n0, n1, np.array([dom.wrap(p) for p in pts]),
                    0.0, 0.0)
        fwd, bwd = _segment_costs(m, e.polyline, dom)
        e._seg_fwd = fwd
        e._seg_bwd = bwd
        e.len_fwd = float(np.sum(fwd))
        e.len_bwd = float(np.sum(bwd))
        edges.append(e)

    # chains anchored at special-cell nodes or at dead ends
    for k in range(len(cross)):
        if k in visited:
            continue
        nlinks = links[k]
        anchored = [l for l in nlinks if l[0] == "n"]
        degree = len(nlinks)
        if degree >= 1 and (anchored or degree == 1):
            # start from an anchor (or dead end) and walk to the other side
            start_node = anchored[0][1] if anchored else None
            out_links = [l for l in nlinks if l[0] == "c"]
            if not out_links:
                # crossing pinned between two nodes or dangling alone
                if start_node is not None and len(anchored) == 2:
                    add_edge(anchored[0][1], anchored[1][1],
                             [nodes[anchored[0][1]].pos, crossing_pos(k),
                              nodes[anchored[1][1]].pos])
                elif start_node is not None:
                    end = ensure_end_node(k)
                    add_edge(start_node, end,
                             [nodes[start_node].pos, crossing_pos(k)])
                visited.add(k)
                continue
            chain, end_node = walk(k, out_links[0])
            if any(c in visited for c in chain):
                continue
            visited.update(chain)
            n0 = start_node if start_node is not None else ensure_end_node(k)
            if end_node is None:
                n1 = ensure_end_node(chain[-1])
            else:
                n1 = end_node
            pts = [nodes[n0].pos] + [crossing_pos(c) for c in chain] + [nodes[n1].pos]
            if start_node is None:
                pts = pts[1:]
            if end_node is None:
                pts = pts[:-1]
            add_edge(n0, n1, pts)

    # leftover pure loops (closed chains without junctions)
    for k in range(len(cross)):
        if k in visited or not links[k]:
            continue
        out_links = [l for l in links[k] if l[0] == "c"]
        if not out_links:
            visited.add(k)
            continue
        chain, _ = walk(k, out_links[0])
        chain = chain[:1] + [c for c in chain[1:] if c != k]
        visited.update(chain)
        nid = ensure_end_node(k)
        pts = [nodes[nid].pos] + [crossing_pos(c) for c in chain[1:]] + [nodes[nid].pos]
        add_edge(nid, nid, pts)

    graph = CutGraph(nodes, edges, dom, h)
    _cleanup(graph, m)
    _rescue_isolated_endpoints(graph, m, cset, field, detection, cap)
    _finalize(graph)
    _mark_multiplicity(graph, field, detection)
    return graph


def _mark_multiplicity(graph, field, detection):
    """Record detected segment multiplicities on the field's node array."""
    nx, ny = field.grid.shape
    torus = field.domain.is_torus
    for c in detection.crossings:
        off = (1, 0) if c.axis == 0 else (0, 1)
        for i, j in ((c.i, c.j), (c.i + off[0], c.j + off[1])):
            if torus:
                i, j = i % nx, j % ny
            elif not (0 <= i < nx and 0 <= j < ny):
                continue
            field.multiplicity[i, j] = max(field.multiplicity[i, j], 2)
    for n in graph.nodes:
        fi, fj = field.grid.index_of(n.pos)
        i = int(np.clip(round(float(fi)), 0, nx - 1))
        j = int(np.clip(round(float(fj)), 0, ny - 1))
        field.multiplicity[i, j] = max(field.multiplicity[i, j],
                                       min(n.multiplicity, np.iinfo(np.int16).max))


def _cell_components(special, nx, ny, torus):
    comp_of = {}
    comp = 0
    for cell in sorted(special):
        if cell in comp_of:
            continue
        stack = [cell]
        comp_of[cell] = comp
        while stack:
            i, j = stack.pop()
            for di, dj in ((1, 0), (-1, 0), (0, 1), (0, -1)):
                nb = ((i + di) % nx, (j + dj) % ny) if torus else (i + di, j + dj)
                if nb in special and nb not in comp_of:
                    comp_of[nb] = comp
                    stack.append(nb)
        comp += 1
    return comp_of


def _node_position(grid, members, cells, cross):
    """Junction refinement: a single cell with four crossings gives the
    intersection of its two chords; otherwise the crossing/cell centroid."""
    dom = grid.domain
    if len(members) == 1:
        ids = cells.get(members[0], [])
        if len(ids) == 4:
            ax0 = [cross[k] for k in ids if cross[k].axis == 0]
            ax1 = [cross[k] for k in ids if cross[k].axis == 1]
            if len(ax0) == 2 and len(ax1) == 2:
                p = _line_intersection(ax0[0].pos, ax0[1].pos, ax1[0].pos, ax1[1].pos,
                                       dom)
                if p is not None:
                    return dom.wrap(p)
        if ids:
            ref = cross[ids[0]].pos
            rel = [ref + dom.displacement(ref, cross[k].pos) for k in ids]
            return dom.wrap(np.mean(rel, axis=0))
    pts = []
    ref = None
    for cell in members:
        center = grid.point(cell[0], cell[1]) + 0.5 * grid.h
        for k in cells.get(cell, []):
            center = cross[k].pos
            break
        if ref is None:
            ref = center
        pts.append(ref + dom.displacement(ref, center))
    return dom.wrap(np.mean(pts, axis=0))


def _line_intersection(p0, p1, q0, q1, dom):
    ref = p0
    p1 = ref + dom.displacement(ref, p1)
    q0 = ref + dom.displacement(ref, q0)
    q1 = ref + dom.displacement(ref, q1)
    d1 = p1 - p0
    d2 = q1 - q0
    den = d1[0] * d2[1] - d1[1] * d2[0]
    if abs(den) < 1e-14:
        return None
    t = ((q0[0] - p0[0]) * d2[1] - (q0[1] - p0[1]) * d2[0]) / den
    return p0 + t * d1


def _equalize_position(m, field, q0, feet):
    """Point equalizing the distances from the given feet (junction/focal
    center): grid search to sub-cell scale, then Newton on the distance
    differences (their gradients are the unit covectors, available in
    closed form for constant metrics).  Returns (position, final spread).
    """
    from .metric import norm as fnorm

    P = np.asarray(feet, float)
    q = np.asarray(q0, float)

    def spread_at(z):
        L = fnorm(m, np.broadcast_to(z, P.shape), z - P)
        return (float(L.max() - L.min()) if len(L) else 0.0), L

    for r in (field.grid.h, field.grid.h / 6.0):
        best = None
        for dx in np.linspace(-r, r, 7):
            for dy in np.linspace(-r, r, 7):
                z = q + np.array([dx, dy])
                s, _ = spread_at(z)
                if best is None or s < best[0]:
                    best = (s, z)
        q = best[1]

    if m.is_constant and 2 <= len(P) <= 8:
        a, b, _, _ = m.coeffs(q)
        a = np.asarray(a)
        b = np.asarray(b)
        for _ in range(12):
            disp = q[None, :] - P
            L = fnorm(m, np.broadcast_to(q, P.shape), disp)
            if L.max() - L.min() < 1e-12:
                break
            al = np.sqrt(np.einsum("ki,ij,kj->k", disp, a, disp))
            grads = (disp @ a) / al[:, None] + b  # d F(q - f_k) / dq
            r_vec = L[1:] - L[0]
            J = grads[1:] - grads[0]
            step, *_ = np.linalg.lstsq(J, -r_vec, rcond=None)
            if np.max(np.abs(step)) > field.grid.h:
                break
            q = q + step
    s, _ = spread_at(q)
    return q, s


def _wide_shell_feet(m, cset, field, q0):
    from .distance import _instances
    from .metric import norm as fnorm

    inst = _instances(cset.sampled(field.eps), field.domain)[0]
    q0 = np.asarray(q0, float)
    L0 = fnorm(m, np.broadcast_to(q0, inst.shape), q0 - inst)
    return inst[L0 <= L0.min() + field.slack_wide]


def _make_node(nid, pos, m, cset, field, cap):
    raw_wide = min_segments(m, cset, pos, field=field, cap=cap,
                            slack=field.slack_wide, local_min_filter=False)
    fan_wide = min_segments(m, cset, pos, field=field, cap=cap,
                            slack=field.slack_wide)
    node_slack = field.slack
    if raw_wide.multiplicity >= cap // 2:
        # continuum candidate: equalize over the whole near-minimal shell;
        # the residual spread bounds how equal "equal" can look here
        pos, spread = _equalize_position(m, field, pos,
                                         _wide_shell_feet(m, cset, field, pos))
        pos = field.domain.wrap(pos)
        node_slack = max(node_slack, 3.0 * spread)
    elif fan_wide.multiplicity >= 3:
        # junction: equalize over the competing feet
        feet = [s.foot for s in fan_wide.segments[:6]]
        pos, spread = _equalize_position(m, field, pos, feet)
        pos = field.domain.wrap(pos)
        node_slack = max(node_slack, 3.0 * spread)
    raw = min_segments(m, cset, pos, field=field, cap=cap, slack=node_slack,
                       local_min_filter=False)
    continuum = raw.continuum
    fan = min_segments(m, cset, pos, field=field, cap=cap, slack=node_slack)
    mult = cap if continuum else max(fan.multiplicity, 1)
    vels = [s.terminal_velocity for s in fan.segments]
    secs = sectors(m, pos, vels) if vels else []
    kind = _kind_from_sectors(len(secs), continuum)
    return CutNode(nid, np.asarray(pos, float), mult, secs, kind, continuum)


def _kind_from_sectors(n_sectors, continuum=False):
    if continuum or n_sectors > 2:
        return "branch"
    if n_sectors <= 1:
        return "endpoint"
    return "regular"


def _cleanup(graph: CutGraph, m: MetricSpec):
    """Drop degenerate self-loops and contract edges much shorter than a
    cell (tie-break artifacts around exact grid nodes)."""
    h4 = graph.grid_h / 4.0
    keep = []
    remap = {n.id: n.id for n in graph.nodes}

    def find(i):
        while remap[i] != i:
            remap[i] = remap[remap[i]]
            i = remap[i]
        return i

    for e in graph.edges:
        L = min(e.len_fwd, e.len_bwd)
        a, b = find(e.n0), find(e.n1)
        if L < h4:
            if a != b:
                remap[max(a, b)] = min(a, b)
            continue
        keep.append(e)
    alive = {}
    out_nodes = []
    for n in graph.nodes:
        if find(n.id) != n.id:
            continue
        alive[n.id] = len(out_nodes)
        out_nodes.append(n)
    for k, e in enumerate(keep):
        e.n0 = alive[find(e.n0)]
        e.n1 = alive[find(e.n1)]
        e.id = k
    for k, n in enumerate(out_nodes):
        n.id = k
    graph.nodes = out_nodes
    graph.edges = keep
    graph._micro = None


def _rescue_isolated_endpoints(graph, m, cset, field, detection, cap):
    """Extension-failure blobs with no nearby graph geometry become isolated
    endpoint nodes (e.g. a focal point whose interface fan is everywhere
    below the angular tolerance)."""
    flags = detection.extension_flags
    if not np.any(flags):
        return
    grid = field.grid
    pts = grid.points()
    covered_pts = [n.pos for n in graph.nodes]
    for e in graph.edges:
        covered_pts.extend(e.polyline)
    covered = np.array(covered_pts) if covered_pts else np.zeros((0, 2))
    idx = np.argwhere(flags)
    taken = np.zeros(len(idx), dtype=bool)
    for k, (i, j) in enumerate(idx):
        if taken[k]:
            continue
        p = pts[i, j]
        if len(covered):
            disp = graph.domain.displacement(p, covered)
            if np.min(np.hypot(disp[:, 0], disp[:, 1])) < 3.0 * grid.h:
                continue
        # claim the whole flagged blob around this node
        blob = np.hypot(*(pts[idx[:, 0], idx[:, 1]] - p).T) < 4.0 * grid.h
        taken |= blob
        center = pts[idx[blob][:, 0], idx[blob][:, 1]].mean(axis=0)
        nid = len(graph.nodes)
        graph.nodes.append(_make_node(nid, graph.domain.wrap(center),
                                      m, cset, field, cap))
    graph._micro = None


def _finalize(graph: CutGraph):
    for n in graph.nodes:
        n.degree = 0
    for e in graph.edges:
        graph.nodes[e.n0].degree += 1
        graph.nodes[e.n1].degree += 1
    dom = graph.domain
    if not dom.is_torus:
        margin = 1.5 * graph.grid_h
        for n in graph.nodes:
            near = (n.pos[0] < dom.xmin + margin or n.pos[0] > dom.xmax - margin
                    or n.pos[1] < dom.ymin + margin or n.pos[1] > dom.ymax - margin)
            if near and n.degree <= 1:
                n.synthetic = True
    # connected components over nodes
    parent = list(range(len(graph.nodes)))

    def find(i):
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    for e in graph.edges:
        a, b = find(e.n0), find(e.n1)
        if a != b:
            parent[max(a, b)] = min(a, b)
    comp_ids = {}
    for n in graph.nodes:
        r = find(n.id)
        comp_ids.setdefault(r, len(comp_ids))
        n.component = comp_ids[r]


# ---------------------------------------------------------------------------
# intrinsic distance and structure checks

def intrinsic_distance(graph: CutGraph, y1, y2, tol: float | None = None) -> float:
    """Shortest directed path length within the cut locus from y1 to y2;
    +inf across components.  Points are located on the graph first."""
    s = graph.locate(y1, tol)
    t = graph.locate(y2, tol)
    if s == t:
        return 0.0
    adj = graph.micro()["adj"]
    dist = {s: 0.0}
    pq = [(0.0, s)]
    while pq:
        d, u = heapq.heappop(pq)
        if u == t:
            return d
        if d > dist.get(u, np.inf):
            continue
        for v, c in adj[u]:
            nd = d + c
            if nd < dist.get(v, np.inf):
                dist[v] = nd
                heapq.heappush(pq, (nd, v))
    return np.inf


def induced_subgraph_acyclic(graph: CutGraph, center, radius: float) -> bool:
    """Is the micro-graph induced on the chart ball around ``center``
    acyclic?  Used for the local-tree property on contractible balls."""
    mi = graph.micro()
    verts = mi["verts"]
    if len(verts) == 0:
        return True
    disp = graph.domain.displacement(np.asarray(center, float), verts)
    inside = np.hypot(disp[:, 0], disp[:, 1]) <= radius
    idx = {v: k for k, v in enumerate(np.flatnonzero(inside))}
    parent = list(range(len(idx)))

    def find(i):
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    seen = set()
    for u, nbrs in mi["adj"].items():
        if not inside[u]:
            continue
        for v, _ in nbrs:
            if not inside[v] or (v, u) in seen:
                continue
            seen.add((u, v))
            a, b = find(idx[u]), find(idx[v])
            if a == b:
                return False
            parent[max(a, b)] = min(a, b)
    return True


def classify(graph: CutGraph, r0: float | None = None,
             rng: np.random.Generator | None = None, n_balls: int = 25) -> dict:
    """Per-node kinds, branch-point data and a locally-finite branch check
    on sampled balls."""
    r0 = 10 * graph.grid_h if r0 is None else r0
    rng = rng or np.random.default_rng(0)
    kinds = {"endpoint": 0, "regular": 0, "branch": 0}
    branches = []
    for n in graph.nodes:
        if n.synthetic:
            continue
        kinds[n.kind] += 1
        if n.kind == "branch":
            mus = [s.mu for s in n.sectors] or [1.0]
            mu_min = min(mus)
            n_level = int(np.ceil(1.0 / max(1.0 - mu_min, 1e-12)))
            branches.append({"id": n.id, "x": float(n.pos[0]), "y": float(n.pos[1]),
                             "min_mu": mu_min, "n_level": n_level,
                             "continuum": n.continuum, "degree": n.degree})
    max_in_ball = 0
    if graph.nodes:
        pos = np.array([n.pos for n in graph.nodes if n.kind == "branch"])
        for _ in range(n_balls):
            c = np.array([rng.uniform(graph.domain.xmin, graph.domain.xmax),
                          rng.uniform(graph.domain.ymin, graph.domain.ymax)])
            if len(pos):
                disp = graph.domain.displacement(c, pos)
                max_in_ball = max(max_in_ball,
                                  int(np.sum(np.hypot(disp[:, 0], disp[:, 1]) <= r0)))
    return {"kinds": kinds, "branch_points": branches,
            "max_branch_in_ball": max_in_ball, "ball_radius": r0,
            "n_components": graph.n_components}
