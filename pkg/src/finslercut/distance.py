"""Distance fields from a closed set, minimizing-segment enumeration,
the gradient of the field, limit-direction probes and reversibility.

Field construction follows a propagate-then-polish design: anisotropic
label-correcting sweeps over a 16-neighbor stencil give globally consistent
upper bounds, and a polish pass against the set samples removes the stencil
direction bias.  For constant-coefficient metrics the polish is exact
(straight chart segments are minimizing in a Minkowski norm), so the field
is limited only by the set sampling density.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .chart import Domain, Grid
from .errors import GridTooCoarse, NoLimit, SequenceTooShort
from .geodesic import GeodesicPath, integrate, log
from .geodesic import distance as point_distance
from .metric import (
    MetricSpec,
    fundamental_tensor,
    g_angle,
    lipschitz_bound,
    norm,
    unit_vector,
)
from .sets import ClosedSet, SampledSet

THETA_SEP = np.deg2rad(5.0)  # angular tolerance separating segment clusters

# 16-neighbor stencil: all coprime offsets with |di|, |dj| <= 2
STENCIL = np.array([(di, dj) for di in range(-2, 3) for dj in range(-2, 3)
                    if (di, dj) != (0, 0) and np.gcd(abs(di), abs(dj)) == 1])


@dataclass
class MinSegment:
    """A length-minimizing unit-speed geodesic from the set to a point."""

    foot: np.ndarray              # instance position (torus feet may be shifted)
    path: GeodesicPath
    length: float
    terminal_velocity: np.ndarray


@dataclass
class SegmentFan:
    segments: list
    continuum: bool

    @property
    def multiplicity(self) -> int:
        return len(self.segments)


@dataclass
class DistanceField:
    metric: MetricSpec
    cset: ClosedSet
    grid: Grid
    values: np.ndarray        # (nx, ny)
    foot: np.ndarray          # (nx, ny, 2), nan inside the set
    tdir: np.ndarray          # terminal direction, F-unit, nan inside
    inside: np.ndarray        # (nx, ny) bool
    lip: float
    field_tol: float
    multiplicity: np.ndarray  # (nx, ny) int16, refined during detection

    @property
    def domain(self) -> Domain:
        return self.grid.domain

    @property
    def eps(self) -> float:
        return self.grid.h / 2.0

    @property
    def slack(self) -> float:
        """Near-minimality slack for segment enumeration.  For constant
        metrics candidate lengths are nearly exact (projected feet), so the
        slack only needs to absorb sub-cell query-position error; a fat
        slack would over-count segments wherever two cut arcs run close."""
        return 0.01 * self.grid.h * self.lip

    @property
    def slack_wide(self) -> float:
        """Everything-within-field-accuracy shell, used when probing a
        point for a genuine continuum of segments."""
        return 2.0 * self.field_tol

    def interpolate(self, q) -> np.ndarray:
        return self.grid.interpolate(self.values, q)

    def value_at(self, q) -> np.ndarray | float:
        """Field value, exact for constant metrics, bilinear otherwise.
        Scalar for a single point."""
        single = np.asarray(q).ndim == 1
        if self.metric.is_constant:
            d, _, _ = self.query(q)
            inside = self.cset.contains(np.atleast_2d(np.asarray(q, float)), eps=1e-12)
            out = np.where(inside, 0.0, d)
        else:
            out = np.atleast_1d(self.interpolate(q))
        return float(out[0]) if single else out

    def query(self, pts):
        """(distance, foot instance, terminal direction) at arbitrary chart
        points.  Exact sample minimization for constant metrics; nearest-node
        records refreshed with a local chord for variable ones."""
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        if self.metric.is_constant:
            inst = _instances(self.cset.sampled(self.eps), self.domain)
            return _nearest_instance(self.metric, pts, inst)
        fi, fj = self.grid.index_of(pts)
        i = np.clip(np.round(fi).astype(int), 0, self.grid.nx - 1)
        j = np.clip(np.round(fj).astype(int), 0, self.grid.ny - 1)
        foot = self.foot[i, j]
        disp = pts - foot
        d = norm(self.metric, pts, disp)
        w = disp / np.where(d[..., None] == 0, 1.0, d[..., None])
        return d, foot, w

    # -- exports ------------------------------------------------------------

    def to_csv(self, path) -> None:
        nx, ny = self.grid.shape
        pts = self.grid.points()
        with open(path, "w") as fh:
            fh.write("i,j,x,y,d,multiplicity\n")
            for i in range(nx):
                for j in range(ny):
                    fh.write(f"{i},{j},{pts[i, j, 0]:.9g},{pts[i, j, 1]:.9g},"
                             f"{self.values[i, j]:.12g},{int(self.multiplicity[i, j])}\n")

    def to_binary(self, path) -> None:
        """Header: int32 nx, ny; float64 h, ox, oy.  Then row-major float64
        values (little-endian)."""
        with open(path, "wb") as fh:
            fh.write(struct.pack("<ii3d", self.grid.nx, self.grid.ny,
                                 self.grid.h, *self.grid.origin))
            fh.write(self.values.astype("<f8").tobytes())


# ---------------------------------------------------------------------------
# instance geometry helpers

def _instances(sampled: SampledSet, domain: Domain, kmax: int = 2):
    """Sample positions replicated over identified lattice translates.

    Returns (positions (n_shift*S, 2), base sample index (n,), shift index).
    """
    shifts = domain.lattice_shifts(kmax)
    S = len(sampled.points)
    pos = (sampled.points[None, :, :] + shifts[:, None, :]).reshape(-1, 2)
    base = np.tile(np.arange(S), len(shifts))
    shift_id = np.repeat(np.arange(len(shifts)), S)
    return pos, base, shift_id


def _nearest_instance(m: MetricSpec, pts, inst):
    """Best (distance, foot, direction) over instance positions, chunked."""
    pos, _, _ = inst
    n = len(pts)
    best = np.full(n, np.inf)
    arg = np.zeros(n, dtype=np.int64)
    cn = max(1, (1 << 21) // max(len(pos), 1))
    for k in range(0, n, cn):
        blk = pts[k:k + cn]
        disp = blk[:, None, :] - pos[None, :, :]
        F = norm(m, blk[:, None, :], disp)
        a = np.argmin(F, axis=1)
        best[k:k + cn] = F[np.arange(len(blk)), a]
        arg[k:k + cn] = a
    foot = pos[arg]
    disp = pts - foot
    safe = np.where(best[:, None] == 0, 1.0, best[:, None])
    return best, foot, disp / safe


# ---------------------------------------------------------------------------
# field construction

def _coarseness_check(m: MetricSpec, grid: Grid) -> None:
    if m.is_constant:
        return
    step = max(grid.nx // 16, 1), max(grid.ny // 16, 1)
    pts = grid.points()[::step[0], ::step[1]].reshape(-1, 2)
    e = np.array([1.0, 0.0])
    F0 = norm(m, pts, np.broadcast_to(e, pts.shape))
    F1 = norm(m, pts + np.array([grid.h, 0.0]), np.broadcast_to(e, pts.shape))
    jump = np.max(np.abs(F1 - F0) / np.maximum(F0, 1e-12))
    if jump > 0.5:
        raise GridTooCoarse(f"norm varies by {jump:.2f} across one cell")


def _edge_costs(m: MetricSpec, grid: Grid, offsets) -> list:
    """Cost of stepping from a node to node+offset (Simpson along the chord).
    Constant metrics give one scalar per offset."""
    costs = []
    if m.is_constant:
        p0 = grid.origin
        for off in offsets:
            d = off * grid.h
            costs.append(float(norm(m, p0, d)))
        return costs
    pts = grid.points()
    for off in offsets:
        d = off * grid.h
        mid = pts + 0.5 * d
        end = pts + d
        F = (norm(m, pts, np.broadcast_to(d, pts.shape))
             + 4.0 * norm(m, mid, np.broadcast_to(d, pts.shape))
             + norm(m, end, np.broadcast_to(d, pts.shape))) / 6.0
        costs.append(F)
    return costs


def _shift(arr, di, dj, fill, torus):
    """Array whose [i, j] entry is arr[i-di, j-dj] (source node of the hop)."""
    if torus:
        return np.roll(arr, (di, dj), axis=(0, 1))
    out = np.full_like(arr, fill)
    src = (slice(max(-di, 0), arr.shape[0] - max(di, 0)),
           slice(max(-dj, 0), arr.shape[1] - max(dj, 0)))
    dst = (slice(max(di, 0), arr.shape[0] - max(-di, 0)),
           slice(max(dj, 0), arr.shape[1] - max(-dj, 0)))
    out[dst] = arr[src]
    return out


def _propagate(m, grid, values, foot, costs, max_sweeps=600):
    """Synchronous label-correcting sweeps; returns the sweep count."""
    torus = grid.domain.is_torus
    inf = np.inf
    for sweep in range(max_sweeps):
        changed = False
        for off, cost in zip(STENCIL, costs):
            src_d = _shift(values, off[0], off[1], inf, torus)
            if isinstance(cost, float):
                cand = src_d + cost
            else:
                cand = src_d + _shift(cost, off[0], off[1], inf, torus)
            better = cand < values - 1e-15
            if np.any(better):
                changed = True
                values[better] = cand[better]
                for c in range(2):
                    srcf = _shift(foot[..., c], off[0], off[1], np.nan, torus)
                    foot[..., c][better] = srcf[better]
        if not changed:
            return sweep + 1
    return max_sweeps


def distance_field(m: MetricSpec, cset: ClosedSet, grid: Grid,
                   polish: bool = True) -> DistanceField:
    """Distance-from-the-set field on the grid nodes.

    Raises :class:`GridTooCoarse` when the metric varies too fast across a
    cell for the stencil to be meaningful.
    """
    _coarseness_check(m, grid)
    dom = grid.domain
    eps = grid.h / 2.0
    sampled = cset.sampled(eps)
    pts = grid.points()
    nx, ny = grid.shape

    inside = cset.contains(pts, eps=eps)
    values = np.full((nx, ny), np.inf)
    foot = np.full((nx, ny, 2), np.nan)

    inst = _instances(sampled, dom)
    if m.is_constant:
        # the polish pass is exact here; running it first makes the sweeps a
        # pure stability confirmation
        flat = pts.reshape(-1, 2)
        d, f, _ = _nearest_instance(m, flat, inst)
        values[:] = d.reshape(nx, ny)
        foot[:] = f.reshape(nx, ny, 2)
    else:
        # seed nodes within two cells of a sample, then sweep
        pos = inst[0]
        fi, fj = grid.index_of(pos)
        for k in range(len(pos)):
            i0, j0 = int(round(fi[k])), int(round(fj[k]))
            for di in range(-2, 3):
                for dj in range(-2, 3):
                    i, j = i0 + di, j0 + dj
                    if dom.is_torus:
                        i %= nx
                        j %= ny
                    elif not (0 <= i < nx and 0 <= j < ny):
                        continue
                    p = pts[i, j]
                    dseg = p - pos[k]
                    mid = pos[k] + 0.5 * dseg
                    c = (float(norm(m, pos[k], dseg)) + 4 * float(norm(m, mid, dseg))
                         + float(norm(m, p, dseg))) / 6.0
                    if c < values[i, j]:
                        values[i, j] = c
                        foot[i, j] = pos[k]

    costs = _edge_costs(m, grid, STENCIL)
    _propagate(m, grid, values, foot, costs)

    if polish and not m.is_constant:
        # refresh each node against its own and neighboring feet
        cand_feet = [foot]
        for off in STENCIL[:8]:
            cand_feet.append(np.stack([_shift(foot[..., c], off[0], off[1], np.nan,
                                              dom.is_torus) for c in range(2)], axis=-1))
        for cf in cand_feet:
            ok = ~np.isnan(cf[..., 0]) & ~inside
            dseg = pts - cf
            mid = cf + 0.5 * dseg
            with np.errstate(invalid="ignore"):
                c = (norm(m, np.where(ok[..., None], cf, 0.0), np.where(ok[..., None], dseg, 1.0))
                     + 4 * norm(m, np.where(ok[..., None], mid, 0.0), np.where(ok[..., None], dseg, 1.0))
                     + norm(m, pts, np.where(ok[..., None], dseg, 1.0))) / 6.0
            better = ok & (c < values)
            values[better] = c[better]
            foot[better] = cf[better]

    disp = pts - foot
    with np.errstate(invalid="ignore", divide="ignore"):
        F = norm(m, pts, np.where(np.isnan(disp), 1.0, disp))
        tdir = disp / np.where(F[..., None] <= 0, 1.0, F[..., None])
    # membership wins only at the members themselves; boundary samples stay
    # the propagation sources so outside values are not dragged down
    values[inside] = 0.0
    foot[inside] = pts[inside]
    tdir[inside] = np.nan

    lip = lipschitz_bound(m, pts[:: max(nx // 8, 1), :: max(ny // 8, 1)].reshape(-1, 2))
    field_tol = 3.0 * grid.h * lip
    mult = np.where(inside, 0, 1).astype(np.int16)
    return DistanceField(m, cset, grid, values, foot, tdir, inside,
                         lip, field_tol, mult)


# ---------------------------------------------------------------------------
# segment enumeration

def _local_minima(lengths: np.ndarray, closed: bool, tol: float) -> np.ndarray:
    """Mask of samples that locally minimize distance along one chain."""
    n = len(lengths)
    if n == 1:
        return np.ones(1, dtype=bool)
    if closed:
        prev = np.roll(lengths, 1)
        nxt = np.roll(lengths, -1)
        return (lengths <= prev + tol) & (lengths <= nxt + tol)
    prev = np.concatenate([[np.inf], lengths[:-1]])
    nxt = np.concatenate([lengths[1:], [np.inf]])
    return (lengths <= prev + tol) & (lengths <= nxt + tol)


def _cluster_directions(m, q, dirs, lengths, theta_sep):
    """Group candidate directions into clusters of angular span at most
    theta_sep (measured with the g-angle); two segments are distinct iff
    their terminal velocities fall in different clusters.

    The span cap matters: a genuine continuum of directions (focal point)
    has every consecutive gap tiny, and single-linkage chaining would merge
    the whole circle into one cluster.
    Returns representative candidate indices, one per cluster.
    """
    k = len(dirs)
    if k == 1:
        return [0]
    ang = np.arctan2(dirs[:, 1], dirs[:, 0])
    order = np.argsort(ang)
    qb = np.broadcast_to(q, (k, 2))
    gaps = g_angle(m, qb, dirs[order], dirs[order][np.roll(np.arange(k), -1)])
    gaps = np.atleast_1d(gaps)  # gaps[p]: sorted[p] -> sorted[p+1 mod k]
    start = (int(np.argmax(gaps)) + 1) % k  # walk begins after the widest gap
    clusters = [[order[start]]]
    span = 0.0
    for step in range(k - 1):
        pos = (start + step) % k
        nxt = order[(pos + 1) % k]
        gap = float(gaps[pos])
        if gap > theta_sep or span + gap > theta_sep:
            clusters.append([nxt])
            span = 0.0
        else:
            clusters[-1].append(nxt)
            span += gap
    reps = []
    for cl in clusters:
        cl = np.asarray(cl)
        reps.append(int(cl[int(np.argmin(lengths[cl]))]))
    return reps


def _project_foot(parent, q, sample, eps):
    """Replace a winning boundary sample by the exact foot on its analytic
    parent piece, when that foot stays inside the sample's neighborhood
    (otherwise the chain ends there: the corner sample is the true foot)."""
    kind = parent[0]
    if kind == "circle":
        c, r = parent[1], parent[2]
        d = np.asarray(q, float) - c
        nd = float(np.hypot(*d))
        if nd < 1e-14:
            return sample
        f = c + d * (r / nd)
    elif kind == "polyline":
        pts = parent[1]
        best = None
        for a, b in zip(pts[:-1], pts[1:]):
            ab = b - a
            L2 = max(float(ab @ ab), 1e-300)
            t = min(max(float((np.asarray(q) - a) @ ab) / L2, 0.0), 1.0)
            cand = a + t * ab
            dd = float(np.hypot(*(np.asarray(q) - cand)))
            if best is None or dd < best[0]:
                best = (dd, cand)
        f = best[1]
    else:
        return sample
    if np.hypot(*(f - sample)) <= 0.55 * eps:
        return f
    return sample


def _straight_segment(m, foot, q, n=9) -> GeodesicPath:
    disp = np.asarray(q, float) - np.asarray(foot, float)
    L = float(norm(m, foot, disp))
    s = np.linspace(0.0, 1.0, n)
    pts = np.asarray(foot, float)[None, :] + s[:, None] * disp[None, :]
    vel = np.broadcast_to(disp / L, pts.shape).copy()
    return GeodesicPath(s * L, pts, vel, L)


def min_segments(m: MetricSpec, cset: ClosedSet, q, *, field: DistanceField | None = None,
                 slack: float | None = None, theta_sep: float = THETA_SEP,
                 cap: int = 64, domain: Domain | None = None,
                 eps: float | None = None, local_min_filter: bool = True) -> SegmentFan:
    """All distinct minimizing segments from the set to q, clustered by
    terminal direction.  Hitting ``cap`` clusters sets the continuum flag.

    Candidates are local minima of length along each boundary chain (the
    defining property of a distinct geodesic foot); ``local_min_filter=False``
    keeps the whole near-minimal shell instead, which is the right notion
    when probing a focal point for a genuine continuum of segments.

    Points on the set give an empty fan.
    """
    q = np.asarray(q, dtype=float)
    if field is not None:
        domain = domain or field.domain
        slack = field.slack if slack is None else slack
        eps = field.eps if eps is None else eps
    if slack is None or eps is None or domain is None:
        raise ValueError("need a field or explicit slack/eps/domain")
    if bool(cset.contains(q, eps=1e-12)):
        return SegmentFan([], False)

    sampled = cset.sampled(eps)
    if not m.is_constant:
        return _segments_by_reverse_shooting(m, cset, q, field, slack, theta_sep,
                                             cap, domain, sampled)
    shifts = domain.lattice_shifts(2)
    cands_len = []
    cands_pos = []
    cands_parent = []
    cands_shift = []
    for sh in shifts:
        pos = sampled.points + sh
        disp = q[None, :] - pos
        L = norm(m, pos, disp)
        d_here = float(np.min(L))
        for ch in sampled.chains:
            lens = L[ch.start:ch.stop]
            if local_min_filter:
                mask = _local_minima(lens, ch.closed, tol=1e-12 * max(1.0, d_here))
                idx = np.flatnonzero(mask) + ch.start
            else:
                idx = np.arange(ch.start, ch.stop)
            cands_len.append(L[idx])
            cands_pos.append(pos[idx])
            cands_parent.extend([ch.parent] * len(idx))
            cands_shift.extend([sh] * len(idx))

    # exact feet on the analytic parent pieces kill the sampling staircase
    lengths = np.concatenate(cands_len)
    positions = np.vstack(cands_pos)
    for k in range(len(positions)):
        f = _project_foot(cands_parent[k], q - cands_shift[k],
                          positions[k] - cands_shift[k], eps) + cands_shift[k]
        if not np.array_equal(f, positions[k]):
            positions[k] = f
            lengths[k] = float(norm(m, f, q - f))

    d_min = float(np.min(lengths))
    keep = lengths <= d_min + slack
    lengths = lengths[keep]
    positions = positions[keep]
    disp = q[None, :] - positions
    dirs = disp / lengths[:, None]

    reps = _cluster_directions(m, q, dirs, lengths, theta_sep)
    continuum = len(reps) >= cap
    reps = reps[:cap]
    segs = [MinSegment(positions[r], _straight_segment(m, positions[r], q),
                       float(lengths[r]), dirs[r]) for r in reps]
    segs.sort(key=lambda s: s.length)
    return SegmentFan(segs, continuum)


def _segments_by_reverse_shooting(m, cset, q, field, slack, theta_sep, cap,
                                  domain, sampled):
    """Variable-metric enumeration: shoot a fan in the reversed metric from q
    and keep headings whose paths reach the set at near-minimal parameter.
    The arrival window must absorb field-interpolation error, so the wide
    shell is used regardless of the requested slack."""
    rm = m.reversed()
    d_star = float(field.interpolate(q)) if field is not None else None
    if d_star is None or not np.isfinite(d_star):
        raise ValueError("variable-metric segment enumeration needs a field")
    slack = max(slack, field.slack_wide)
    L_max = d_star + 2.0 * slack
    n_fan = 180
    t_dense = np.arange(0.0, L_max, sampled.eps / 2.0)
    hits = []
    for th in np.linspace(0, 2 * np.pi, n_fan, endpoint=False):
        v = unit_vector(rm, q, th)
        try:
            path = integrate(rm, q, v, L_max, tol=1e-8)
        except Exception:
            continue
        dense = path.point_at(t_dense)
        on = cset.contains(dense, eps=sampled.eps)
        if not np.any(on):
            continue
        k = int(np.argmax(on))
        t_hit = float(t_dense[k])
        if t_hit <= d_star + slack:
            hits.append((t_hit, th, dense[k], -v))
    if not hits:
        return SegmentFan([], False)
    lengths = np.array([h[0] for h in hits])
    dirs = np.array([h[3] for h in hits])
    reps = _cluster_directions(m, q, dirs, lengths, theta_sep)
    continuum = len(reps) >= cap
    segs = []
    for r in reps[:cap]:
        t_hit, th, footp, w = hits[r]
        rpath = integrate(rm, q, unit_vector(rm, q, th), t_hit, tol=1e-9)
        segs.append(MinSegment(rpath.end, rpath.reversed_samples(), t_hit, w))
    segs.sort(key=lambda s: s.length)
    return SegmentFan(segs, continuum)


# ---------------------------------------------------------------------------
# gradient of the field

@dataclass
class GradientInfo:
    unique: bool
    covectors: list  # each (2,), acting as v -> w . v
    velocities: list

    def apply(self, v, which: int = 0) -> float:
        return float(np.dot(self.covectors[which], np.asarray(v, float)))


def gradient(m: MetricSpec, cset: ClosedSet, field: DistanceField, q) -> GradientInfo:
    """Differential data of the distance field at q: the covector
    g_X(X, .) per segment cluster; unique when one cluster remains."""
    fan = min_segments(m, cset, q, field=field)
    covs = []
    vels = []
    for seg in fan.segments:
        X = seg.terminal_velocity
        g = fundamental_tensor(m, q, X)
        covs.append(g @ X)
        vels.append(X)
    return GradientInfo(unique=(len(covs) == 1 and not fan.continuum),
                        covectors=covs, velocities=vels)


# ---------------------------------------------------------------------------
# limit directions along an approach sequence

@dataclass
class LimitDirections:
    v_f: np.ndarray
    v_b: np.ndarray
    limit_quotient: float
    residual: float
    quotients: np.ndarray
    backward_quotient: float
    backward_residual: float


def first_variation_probe(m: MetricSpec, cset: ClosedSet, x, approach, *,
                          field: DistanceField | None = None,
                          domain: Domain | None = None,
                          cauchy_tol: float = 0.05) -> LimitDirections:
    """Estimate forward/backward limit directions and the difference-quotient
    limit of the field along an approach sequence, and report the residual
    against the first-variation value min_w g_w(w, v_f) over segment
    velocities at x.
    """
    x = np.asarray(x, dtype=float)
    approach = [np.asarray(p, dtype=float) for p in approach]
    if len(approach) < 4:
        raise SequenceTooShort("need at least 4 approach points")
    domain = domain or (field.domain if field is not None else None)

    def dN(p):
        if field is not None:
            return float(np.atleast_1d(field.value_at(p))[0])
        raise ValueError("probe needs a field")

    vf_seq, vb_seq, quo_f, quo_b = [], [], [], []
    for p in approach:
        v = log(m, x, p, domain=domain)
        Fv = float(norm(m, x, v))
        vf_seq.append(v / Fv)
        u = log(m, p, x, domain=domain)
        Fu = float(norm(m, p, u))
        vb_seq.append(u / Fu)
        quo_f.append((dN(p) - dN(x)) / point_distance(m, x, p, domain=domain))
        quo_b.append((dN(p) - dN(x)) / point_distance(m, p, x, domain=domain))

    # Cauchy test on the last few directions
    tail = np.asarray(vf_seq[-3:])
    spread = np.max(np.linalg.norm(np.diff(tail, axis=0), axis=1))
    if spread > cauchy_tol:
        raise NoLimit(f"forward directions spread {spread:.3g}")
    v_f = vf_seq[-1]
    v_b = vb_seq[-1]

    fan = min_segments(m, cset, x, field=field, domain=domain)
    if not fan.segments:
        raise ValueError("x lies on the set")
    vals = []
    vals_b = []
    for seg in fan.segments:
        w = seg.terminal_velocity
        g = fundamental_tensor(m, x, w)
        vals.append(float(w @ g @ v_f))
        vals_b.append(float(w @ g @ (-v_b)))
    predicted = min(vals)
    predicted_b = min(vals_b)
    return LimitDirections(
        v_f=v_f, v_b=v_b,
        limit_quotient=quo_f[-1],
        residual=abs(quo_f[-1] - predicted),
        quotients=np.asarray(quo_f),
        backward_quotient=quo_b[-1],
        backward_residual=abs(quo_b[-1] - predicted_b),
    )


# ---------------------------------------------------------------------------
# reversibility

def reversibility(m: MetricSpec, bounds, n_pairs: int = 1000,
                  rng: Optional[np.random.Generator] = None,
                  domain: Domain | None = None) -> float:
    """Empirical two-sided distance-ratio bound lambda over sampled pairs:
    max of d(x,y)/d(y,x) and its reciprocal; always >= 1."""
    rng = rng or np.random.default_rng(0)
    lo = np.array([bounds[0], bounds[2]], dtype=float)
    hi = np.array([bounds[1], bounds[3]], dtype=float)
    lam = 1.0
    for _ in range(n_pairs):
        p = lo + rng.random(2) * (hi - lo)
        q = lo + rng.random(2) * (hi - lo)
        if np.allclose(p, q):
            continue
        d1 = point_distance(m, p, q, domain=domain)
        d2 = point_distance(m, q, p, domain=domain)
        if d1 <= 0 or d2 <= 0:
            continue
        lam = max(lam, d1 / d2, d2 / d1)
    return lam
