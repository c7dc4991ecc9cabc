"""Closed source sets on the chart: points, polylines, circles and discs
with circular bites, discretized into sample chains with a spacing
guarantee.

Samples always lie exactly on the set; consecutive samples along a chain
are at most ``eps`` apart, so the set is within ``eps`` of its sample cloud
(one-sided Hausdorff).  Chain structure (which samples are consecutive
along one boundary piece, and whether the piece closes up) is kept because
segment enumeration needs local minima *along* the boundary.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class Point:
    p: tuple[float, float]


@dataclass(frozen=True)
class Polyline:
    points: tuple  # ((x, y), ...)
    closed: bool = False


@dataclass(frozen=True)
class Circle:
    """The circle curve itself (not filled)."""

    center: tuple[float, float]
    radius: float


@dataclass(frozen=True)
class Disc:
    """Filled disc, minus the open interiors of the listed bite discs.

    The boundary consists of the arcs of the rim outside every bite and the
    arcs of each bite circle inside the disc.
    """

    center: tuple[float, float]
    radius: float
    bites: tuple = ()  # ((cx, cy, r), ...)


@dataclass
class Chain:
    start: int
    stop: int  # exclusive index into the sample array
    closed: bool
    parent: tuple = ("point",)  # analytic piece the samples lie on


@dataclass
class SampledSet:
    points: np.ndarray  # (S, 2)
    chains: list[Chain]
    eps: float


def _circle_points(center, radius, eps, t0=0.0, t1=2 * np.pi):
    n = max(int(np.ceil(radius * (t1 - t0) / eps)), 8)
    closed = np.isclose(t1 - t0, 2 * np.pi)
    t = np.linspace(t0, t1, n, endpoint=not closed)
    c = np.asarray(center, dtype=float)
    return c + radius * np.stack([np.cos(t), np.sin(t)], axis=-1), closed


def _circle_intersections(c1, r1, c2, r2):
    """The (up to two) intersection points of two circles."""
    c1 = np.asarray(c1, float)
    c2 = np.asarray(c2, float)
    d = float(np.linalg.norm(c2 - c1))
    if d < 1e-14 or d > r1 + r2 or d < abs(r1 - r2):
        return []
    a = (r1**2 - r2**2 + d**2) / (2 * d)
    h2 = r1**2 - a**2
    if h2 < 0:
        return []
    h = np.sqrt(max(h2, 0.0))
    u = (c2 - c1) / d
    mid = c1 + a * u
    perp = np.array([-u[1], u[0]])
    if h < 1e-14:
        return [mid]
    return [mid + h * perp, mid - h * perp]


def _mask_runs(mask: np.ndarray, cyclic: bool):
    """Contiguous True runs as (start, indices) lists; cyclic runs may wrap."""
    n = len(mask)
    if mask.all():
        return [np.arange(n)], True
    if not mask.any():
        return [], False
    idx = np.flatnonzero(mask)
    breaks = np.flatnonzero(np.diff(idx) > 1)
    runs = np.split(idx, breaks + 1)
    if cyclic and len(runs) > 1 and mask[0] and mask[-1]:
        runs[0] = np.concatenate([runs[-1], runs[0]])
        runs.pop()
    return runs, False


class ClosedSet:
    """A closed subset of the chart built from primitives."""

    def __init__(self, primitives):
        self.primitives = list(primitives)
        if not self.primitives:
            raise ValueError("closed set needs at least one primitive")
        self._cache: dict[float, SampledSet] = {}

    def contains(self, q, eps: float = 1e-9) -> np.ndarray:
        """True set membership; curve primitives count within ``eps``."""
        q = np.asarray(q, dtype=float)
        out = np.zeros(q.shape[:-1], dtype=bool)
        for prim in self.primitives:
            if isinstance(prim, Point):
                d = np.linalg.norm(q - np.asarray(prim.p), axis=-1)
                out |= d <= eps
            elif isinstance(prim, Circle):
                r = np.linalg.norm(q - np.asarray(prim.center), axis=-1)
                out |= np.abs(r - prim.radius) <= eps
            elif isinstance(prim, Polyline):
                pts = np.asarray(prim.points, dtype=float)
                segs = list(zip(pts[:-1], pts[1:]))
                if prim.closed:
                    segs.append((pts[-1], pts[0]))
                for a, b in segs:
                    ab = b - a
                    L2 = ab @ ab
                    t = np.clip(np.einsum("...i,i->...", q - a, ab) / max(L2, 1e-300), 0, 1)
                    d = np.linalg.norm(q - a - t[..., None] * ab, axis=-1)
                    out |= d <= eps
            elif isinstance(prim, Disc):
                inside = np.linalg.norm(q - np.asarray(prim.center), axis=-1) <= prim.radius + eps
                for cx, cy, r in prim.bites:
                    inside &= np.linalg.norm(q - np.array([cx, cy]), axis=-1) >= r - eps
                out |= inside
            else:
                raise TypeError(f"unknown primitive {type(prim)}")
        return out

    def sampled(self, eps: float) -> SampledSet:
        key = round(float(eps), 12)
        if key not in self._cache:
            self._cache[key] = self._build(float(eps))
        return self._cache[key]

    def exact_distance(self, q) -> np.ndarray:
        """Exact Euclidean distance to the set (analytic primitives, no
        sampling): the independent oracle for gradient and calculus checks
        under the Euclidean metric."""
        q = np.asarray(q, dtype=float)
        best = np.full(q.shape[:-1], np.inf)
        for prim in self.primitives:
            if isinstance(prim, Point):
                best = np.minimum(best, np.linalg.norm(q - np.asarray(prim.p), axis=-1))
            elif isinstance(prim, Circle):
                r = np.linalg.norm(q - np.asarray(prim.center), axis=-1)
                best = np.minimum(best, np.abs(r - prim.radius))
            elif isinstance(prim, Polyline):
                pts = np.asarray(prim.points, dtype=float)
                segs = list(zip(pts[:-1], pts[1:]))
                if prim.closed:
                    segs.append((pts[-1], pts[0]))
                for a, b in segs:
                    ab = b - a
                    L2 = max(float(ab @ ab), 1e-300)
                    t = np.clip(np.einsum("...i,i->...", q - a, ab) / L2, 0, 1)
                    best = np.minimum(best, np.linalg.norm(q - a - t[..., None] * ab,
                                                           axis=-1))
            elif isinstance(prim, Disc):
                best = np.minimum(best, self._disc_exact(prim, q))
        return best

    def _disc_exact(self, prim: Disc, q) -> np.ndarray:
        c = np.asarray(prim.center, dtype=float)
        inside = np.linalg.norm(q - c, axis=-1) <= prim.radius
        for cx, cy, r in prim.bites:
            inside &= np.linalg.norm(q - np.array([cx, cy]), axis=-1) >= r
        circles = [(c, prim.radius)] + [(np.array([bx, by]), br)
                                        for bx, by, br in prim.bites]
        best = np.full(q.shape[:-1], np.inf)
        for k, (cc, r) in enumerate(circles):
            rad = np.linalg.norm(q - cc, axis=-1)
            safe = np.where(rad == 0, 1.0, rad)
            foot = cc + (q - cc) * (r / safe)[..., None]
            # radial foot must lie on the kept part of this circle
            ok = rad > 0
            if k > 0:
                ok &= np.linalg.norm(foot - c, axis=-1) <= prim.radius + 1e-12
            for j, (bx, by, br) in enumerate(prim.bites):
                if j + 1 == k:
                    continue
                ok &= np.linalg.norm(foot - np.array([bx, by]), axis=-1) >= br - 1e-12
            best = np.minimum(best, np.where(ok, np.abs(rad - r), np.inf))
        for corner in self._disc_corners(prim):
            best = np.minimum(best, np.linalg.norm(q - corner, axis=-1))
        return np.where(inside, 0.0, best)

    def _build(self, eps: float) -> SampledSet:
        pts: list[np.ndarray] = []
        chains: list[Chain] = []

        def add(arr, closed, parent=("point",)):
            arr = np.atleast_2d(arr)
            chains.append(Chain(sum(len(p) for p in pts), 0, closed, parent))
            pts.append(arr)
            chains[-1].stop = chains[-1].start + len(arr)

        for prim in self.primitives:
            if isinstance(prim, Point):
                add(np.asarray(prim.p, dtype=float), closed=False)
            elif isinstance(prim, Circle):
                arr, closed = _circle_points(prim.center, prim.radius, eps)
                add(arr, closed, ("circle", np.asarray(prim.center, float), prim.radius))
            elif isinstance(prim, Polyline):
                p = np.asarray(prim.points, dtype=float)
                if prim.closed:
                    p = np.vstack([p, p[:1]])
                out = [p[0]]
                for a, b in zip(p[:-1], p[1:]):
                    L = float(np.linalg.norm(b - a))
                    n = max(int(np.ceil(L / eps)), 1)
                    for k in range(1, n + 1):
                        out.append(a + (b - a) * k / n)
                arr = np.asarray(out)
                if prim.closed:
                    arr = arr[:-1]
                add(arr, prim.closed, ("polyline", p))
            elif isinstance(prim, Disc):
                self._build_disc(prim, eps, add)
            else:
                raise TypeError(f"unknown primitive {type(prim)}")
        return SampledSet(np.vstack(pts), chains, eps)

    def _build_disc(self, prim: Disc, eps: float, add) -> None:
        c = np.asarray(prim.center, dtype=float)
        corners = self._disc_corners(prim)

        def snap(run_pts):
            # open chains end where a mask cut them, up to eps from the true
            # boundary corner; anchoring the ends at the exact corners keeps
            # spike feet (and the direction jumps they cause) sharp
            out = run_pts
            for end in (0, -1):
                if len(corners):
                    d = np.linalg.norm(corners - out[end], axis=-1)
                    k = int(np.argmin(d))
                    if 1e-12 < d[k] <= 2.0 * eps:
                        out = (np.vstack([corners[k], out]) if end == 0
                               else np.vstack([out, corners[k]]))
            return out

        rim, _ = _circle_points(c, prim.radius, eps)
        keep = np.ones(len(rim), dtype=bool)
        for cx, cy, r in prim.bites:
            keep &= np.linalg.norm(rim - np.array([cx, cy]), axis=-1) >= r - 1e-12
        runs, whole = _mask_runs(keep, cyclic=True)
        for run in runs:
            add(rim[run] if whole else snap(rim[run]), closed=whole,
                parent=("circle", c, prim.radius))
        for cx, cy, r in prim.bites:
            arc, _ = _circle_points((cx, cy), r, eps)
            inside = np.linalg.norm(arc - c, axis=-1) <= prim.radius + 1e-12
            for bx, by, br in prim.bites:
                if (bx, by, br) != (cx, cy, r):
                    inside &= np.linalg.norm(arc - np.array([bx, by]), axis=-1) >= br - 1e-12
            runs, whole = _mask_runs(inside, cyclic=True)
            for run in runs:
                add(arc[run] if whole else snap(arc[run]), closed=whole,
                    parent=("circle", np.array([cx, cy]), r))

    def _disc_corners(self, prim: Disc) -> np.ndarray:
        """Exact corner points of the disc-with-bites boundary: pairwise
        circle intersections that actually lie on the boundary."""
        c = np.asarray(prim.center, dtype=float)
        circles = [(c, prim.radius)] + [(np.array([bx, by]), br)
                                        for bx, by, br in prim.bites]
        pts = []
        for a in range(len(circles)):
            for b in range(a + 1, len(circles)):
                pts.extend(_circle_intersections(*circles[a], *circles[b]))
        out = []
        for p in pts:
            if np.linalg.norm(p - c) > prim.radius + 1e-9:
                continue
            if any(np.linalg.norm(p - np.array([bx, by])) < br - 1e-9
                   for bx, by, br in prim.bites):
                continue
            if not any(np.linalg.norm(p - q) < 1e-9 for q in out):
                out.append(p)
        return np.asarray(out) if out else np.zeros((0, 2))


def example26_bites(n_max: int = 6):
    """Bite circle centers for the chain-of-bites disc: unit circles through
    consecutive rim points at angles pi/2^n.  The center of the circle
    through two unit-circle points at angles s, t is their vector sum."""
    thetas = [np.pi / 2**n for n in range(1, n_max + 2)]
    bites = []
    for n in range(n_max):
        p0 = np.array([np.cos(thetas[n]), np.sin(thetas[n])])
        p1 = np.array([np.cos(thetas[n + 1]), np.sin(thetas[n + 1])])
        q = p0 + p1
        bites.append((float(q[0]), float(q[1]), 1.0))
    return bites
