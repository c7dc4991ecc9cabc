"""Chart domain (plane window or flat torus) and grid geometry.

All module kernels work on a single rectangular chart.  Points are numpy
arrays of shape (2,) or (..., 2); the last axis is (x, y).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import LeftDomain

PLANE = "plane"
TORUS = "torus"


@dataclass(frozen=True)
class Domain:
    """Rectangular chart window, optionally with periodic (torus) wrap.

    In torus mode the fundamental domain is [xmin, xmax) x [ymin, ymax) and
    all coefficient fields are assumed periodic.  ``pad`` is the margin
    beyond an open plane window inside which integration is still allowed;
    leaving the padded window raises :class:`LeftDomain`.
    """

    mode: str
    xmin: float
    xmax: float
    ymin: float
    ymax: float
    pad: float = 0.0

    def __post_init__(self):
        if self.mode not in (PLANE, TORUS):
            raise ValueError(f"unknown domain mode {self.mode!r}")
        if not (self.xmax > self.xmin and self.ymax > self.ymin):
            raise ValueError("empty domain rectangle")

    @property
    def periods(self) -> np.ndarray:
        return np.array([self.xmax - self.xmin, self.ymax - self.ymin])

    @property
    def lower(self) -> np.ndarray:
        return np.array([self.xmin, self.ymin])

    @property
    def upper(self) -> np.ndarray:
        return np.array([self.xmax, self.ymax])

    @property
    def is_torus(self) -> bool:
        return self.mode == TORUS

    def contains(self, p, pad: float | None = None) -> np.ndarray:
        """Vectorized membership test (always true on a torus)."""
        p = np.asarray(p, dtype=float)
        if self.is_torus:
            return np.ones(p.shape[:-1], dtype=bool)
        m = self.pad if pad is None else pad
        lo, hi = self.lower - m, self.upper + m
        return np.all((p >= lo) & (p <= hi), axis=-1)

    def check_inside(self, p, t: float = 0.0) -> None:
        if not bool(np.all(self.contains(p))):
            raise LeftDomain(np.asarray(p, dtype=float), t)

    def wrap(self, p) -> np.ndarray:
        """Map points into the fundamental domain (identity on a plane)."""
        p = np.asarray(p, dtype=float)
        if not self.is_torus:
            return p
        return self.lower + np.mod(p - self.lower, self.periods)

    def lattice_shifts(self, kmax: int = 2) -> np.ndarray:
        """Chart translations identified with 0 (just the origin on a plane)."""
        if not self.is_torus:
            return np.zeros((1, 2))
        ks = np.arange(-kmax, kmax + 1)
        kx, ky = np.meshgrid(ks, ks, indexing="ij")
        return np.stack([kx.ravel() * self.periods[0],
                         ky.ravel() * self.periods[1]], axis=-1).astype(float)

    def displacement(self, p, q) -> np.ndarray:
        """Chart displacement q - p, reduced to the nearest image on a torus.

        The reduction is Euclidean-nearest; callers that care about strongly
        anisotropic norms should minimize over :meth:`lattice_shifts`.
        """
        d = np.asarray(q, dtype=float) - np.asarray(p, dtype=float)
        if not self.is_torus:
            return d
        per = self.periods
        return d - np.round(d / per) * per


@dataclass(frozen=True)
class Grid:
    """Uniform node grid over a domain; values arrays are indexed [i, j]
    with node (i, j) at ``origin + (i*h, j*h)``.

    On a torus the right/top duplicate rows are dropped (nx = period/h).
    """

    domain: Domain
    h: float
    nx: int = field(init=False)
    ny: int = field(init=False)

    def __post_init__(self):
        if self.h <= 0:
            raise ValueError("grid spacing must be positive")
        per = self.domain.periods
        if self.domain.is_torus:
            nx = int(round(per[0] / self.h))
            ny = int(round(per[1] / self.h))
            if not (np.isclose(nx * self.h, per[0]) and np.isclose(ny * self.h, per[1])):
                raise ValueError("torus grid spacing must divide both periods")
        else:
            nx = int(np.floor(per[0] / self.h + 1e-9)) + 1
            ny = int(np.floor(per[1] / self.h + 1e-9)) + 1
        object.__setattr__(self, "nx", nx)
        object.__setattr__(self, "ny", ny)

    @property
    def origin(self) -> np.ndarray:
        return self.domain.lower

    @property
    def shape(self) -> tuple[int, int]:
        return (self.nx, self.ny)

    def point(self, i, j) -> np.ndarray:
        return self.origin + np.stack([np.asarray(i) * self.h,
                                       np.asarray(j) * self.h], axis=-1)

    def points(self) -> np.ndarray:
        """All node coordinates, shape (nx, ny, 2)."""
        i, j = np.meshgrid(np.arange(self.nx), np.arange(self.ny), indexing="ij")
        return self.point(i, j)

    def index_of(self, p) -> tuple[np.ndarray, np.ndarray]:
        """Fractional index coordinates of chart points."""
        p = self.domain.wrap(np.asarray(p, dtype=float))
        rel = (p - self.origin) / self.h
        return rel[..., 0], rel[..., 1]

    def interpolate(self, values: np.ndarray, p) -> np.ndarray:
        """Bilinear interpolation of a node array at chart points."""
        fi, fj = self.index_of(p)
        if self.domain.is_torus:
            i0 = np.floor(fi).astype(int) % self.nx
            j0 = np.floor(fj).astype(int) % self.ny
            i1 = (i0 + 1) % self.nx
            j1 = (j0 + 1) % self.ny
            ti = fi - np.floor(fi)
            tj = fj - np.floor(fj)
        else:
            fi = np.clip(fi, 0.0, self.nx - 1.0)
            fj = np.clip(fj, 0.0, self.ny - 1.0)
            i0 = np.minimum(np.floor(fi).astype(int), self.nx - 2)
            j0 = np.minimum(np.floor(fj).astype(int), self.ny - 2)
            i1, j1 = i0 + 1, j0 + 1
            ti, tj = fi - i0, fj - j0
        v00 = values[i0, j0]
        v10 = values[i1, j0]
        v01 = values[i0, j1]
        v11 = values[i1, j1]
        return ((1 - ti) * (1 - tj) * v00 + ti * (1 - tj) * v10
                + (1 - ti) * tj * v01 + ti * tj * v11)


def plane_window(xmin, xmax, ymin, ymax, pad=0.0) -> Domain:
    return Domain(PLANE, float(xmin), float(xmax), float(ymin), float(ymax), float(pad))


def torus(width=1.0, height=None) -> Domain:
    height = width if height is None else height
    return Domain(TORUS, 0.0, float(width), 0.0, float(height))
