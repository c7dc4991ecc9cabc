"""Geodesic integration, exponential/log maps, Jacobi fields, two-point
minimal geodesics.

The integrator is an adaptive Dormand-Prince 5(4) pair on the first-order
spray system (x', v') = (v, S(x, v)).  The velocity is renormalized to the
indicatrix after every accepted step, so the arclength parameter stays
honest; unit-speed drift along a path is bounded by ~10x the local
tolerance.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .chart import Domain
from .errors import NoConvergence, NotFound, StepUnderflow
from .metric import MetricSpec, norm, normalize, spray, unit_vector

# Dormand-Prince 5(4) tableau
_C = np.array([0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0])
_A = [
    np.array([1 / 5]),
    np.array([3 / 40, 9 / 40]),
    np.array([44 / 45, -56 / 15, 32 / 9]),
    np.array([19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729]),
    np.array([9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656]),
]
_B5 = np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84])
_B4 = np.array([5179 / 57600, 0.0, 7571 / 16695, 393 / 640, -92097 / 339200,
                187 / 2100, 1 / 40])


@dataclass
class GeodesicPath:
    """Unit-speed geodesic samples (t is arclength).  Positions are stored
    unwrapped even in torus mode so interpolation stays smooth."""

    t: np.ndarray          # (k,)
    points: np.ndarray     # (k, 2)
    velocities: np.ndarray  # (k, 2)
    length: float

    @property
    def start(self) -> np.ndarray:
        return self.points[0]

    @property
    def end(self) -> np.ndarray:
        return self.points[-1]

    def point_at(self, t) -> np.ndarray:
        """Cubic Hermite interpolation between stored samples."""
        t = np.asarray(t, dtype=float)
        idx = np.clip(np.searchsorted(self.t, t, side="right") - 1, 0, len(self.t) - 2)
        t0, t1 = self.t[idx], self.t[idx + 1]
        dt = np.where(t1 > t0, t1 - t0, 1.0)
        s = np.clip((t - t0) / dt, 0.0, 1.0)
        p0, p1 = self.points[idx], self.points[idx + 1]
        v0, v1 = self.velocities[idx], self.velocities[idx + 1]
        s = s[..., None]
        h00 = 2 * s**3 - 3 * s**2 + 1
        h10 = s**3 - 2 * s**2 + s
        h01 = -2 * s**3 + 3 * s**2
        h11 = s**3 - s**2
        return h00 * p0 + h10 * dt[..., None] * v0 + h01 * p1 + h11 * dt[..., None] * v1

    def velocity_at(self, t) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        idx = np.clip(np.searchsorted(self.t, t, side="right") - 1, 0, len(self.t) - 2)
        t0, t1 = self.t[idx], self.t[idx + 1]
        dt = np.where(t1 > t0, t1 - t0, 1.0)
        s = np.clip((t - t0) / dt, 0.0, 1.0)[..., None]
        v0, v1 = self.velocities[idx], self.velocities[idx + 1]
        return (1 - s) * v0 + s * v1

    def reversed_samples(self) -> "GeodesicPath":
        """Same trace walked backwards (velocities flipped); only the sample
        geometry is meaningful, the result is a geodesic of the reversed
        metric."""
        L = self.length
        return GeodesicPath(L - self.t[::-1], self.points[::-1].copy(),
                            -self.velocities[::-1], L)

    def to_csv(self, path) -> None:
        with open(path, "w") as fh:
            fh.write("t,x,y,v1,v2\n")
            for t, p, v in zip(self.t, self.points, self.velocities):
                fh.write(f"{t:.12g},{p[0]:.12g},{p[1]:.12g},{v[0]:.12g},{v[1]:.12g}\n")


def _rk_step(f, x, v, h):
    k = [np.concatenate(f(x, v))]
    y0 = np.concatenate([x, v])
    for row in _A:
        y = y0 + h * sum(c * ki for c, ki in zip(row, k))
        k.append(np.concatenate(f(y[:2], y[2:])))
    y5 = y0 + h * sum(c * ki for c, ki in zip(_B5, k[:6]))
    k.append(np.concatenate(f(y5[:2], y5[2:])))  # FSAL stage
    y4 = y0 + h * sum(c * ki for c, ki in zip(_B4, k))
    return y5, y5 - y4


def integrate(m: MetricSpec, p, v, length: float, tol: float = 1e-8,
              domain: Domain | None = None, max_step: float | None = None) -> GeodesicPath:
    """Integrate the unit-speed geodesic from p with initial velocity v
    (caller normalizes; a non-unit v is renormalized here) for the given
    arclength.

    Raises :class:`LeftDomain` if the path exits an open plane window and
    :class:`StepUnderflow` if step control collapses.
    """
    p = np.asarray(p, dtype=float).copy()
    v = normalize(m, p, np.asarray(v, dtype=float))
    length = float(length)
    if length < 0:
        raise ValueError("length must be nonnegative")
    if domain is not None:
        domain.check_inside(p)
    ts = [0.0]
    xs = [p.copy()]
    vs = [v.copy()]
    if length == 0.0:
        return GeodesicPath(np.array([0.0, 0.0]), np.array([p, p]),
                            np.array([v, v]), 0.0)

    def f(x, vv):
        return vv, spray(m, x, vv)

    hmax = max_step if max_step is not None else max(length / 8.0, 1e-6)
    h = min(hmax, length / 8.0)
    t = 0.0
    x = p
    floor = 1e-14 * max(1.0, length)
    while t < length - 1e-15 * max(1.0, length):
        h = min(h, length - t, hmax)
        if h < floor:
            raise StepUnderflow(f"step {h:.3e} at t={t:.6g}")
        y5, err = _rk_step(f, x, v, h)
        scale = tol + tol * np.abs(np.concatenate([x, v]))
        enorm = np.sqrt(np.mean((err / scale) ** 2))
        if enorm <= 1.0:
            t += h
            x = y5[:2]
            v = y5[2:]
            # keep the parameter an honest arclength
            v = normalize(m, x, v)
            if domain is not None:
                domain.check_inside(x, t)
            ts.append(t)
            xs.append(x.copy())
            vs.append(v.copy())
        grow = 0.9 * enorm ** (-0.2) if enorm > 0 else 5.0
        h *= min(5.0, max(0.2, grow))
    return GeodesicPath(np.array(ts), np.array(xs), np.array(vs), length)


def exponential(m: MetricSpec, p, v, tol: float = 1e-8,
                domain: Domain | None = None) -> np.ndarray:
    """Endpoint of the geodesic with initial data (p, v); the length is
    F(p, v)."""
    L = float(norm(m, p, v))
    if L == 0.0:
        return np.asarray(p, dtype=float).copy()
    path = integrate(m, p, v, L, tol=tol, domain=domain)
    return path.end


def convex_radius(m: MetricSpec, p, domain: Domain | None = None,
                  calib: float = 1.0) -> float:
    """Heuristic radius within which the exponential map is treated as
    invertible: calib / (1 + sup |spray| on the indicatrix), clipped to just
    under half the smallest period on a torus.  The calibration constant is
    chosen so the Euclidean plane case is effectively unrestricted."""
    th = np.linspace(0, 2 * np.pi, 16, endpoint=False)
    vs = unit_vector(m, p, th)
    acc = spray(m, np.broadcast_to(np.asarray(p, float), vs.shape), vs)
    s = float(np.max(np.hypot(acc[:, 0], acc[:, 1])))
    r = calib / (1.0 + s) if s > 1e-12 else np.inf
    if domain is not None and domain.is_torus:
        r = min(r, 0.45 * float(domain.periods.min()))
    return r


def log(m: MetricSpec, p, q, tol: float = 1e-9, domain: Domain | None = None,
        max_iter: int = 25) -> np.ndarray:
    """Local inverse of the exponential map: v with exp_p(v) = q, found by
    Newton shooting from the chart difference.

    Refuses targets beyond the convex radius estimate; raises
    :class:`NoConvergence` when the shooting iteration stalls.
    """
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    disp = q - p if domain is None else domain.displacement(p, q)
    if np.allclose(disp, 0.0, atol=1e-15):
        return np.zeros(2)
    r_cvx = convex_radius(m, p, domain)
    if float(norm(m, p, disp)) > r_cvx:
        raise NoConvergence(f"target beyond convex radius {r_cvx:.3g}")
    if m.is_constant and domain is not None and domain.is_torus:
        # straight chart lines are geodesics; pick the shortest translate
        shifts = domain.lattice_shifts(1)
        cands = disp[None, :] + shifts
        F = norm(m, np.broadcast_to(p, cands.shape), cands)
        disp = cands[int(np.argmin(F))]
    if m.is_constant:
        return disp.copy()

    v = disp.copy()
    target = p + disp  # work in the unwrapped chart
    scale = max(1.0, float(np.max(np.abs(disp))))
    tol_int = max(tol / 50.0, 1e-13)
    for _ in range(max_iter):
        r = exponential(m, p, v, tol=tol_int) - target
        if float(np.max(np.abs(r))) < tol * scale:
            return v
        J = np.empty((2, 2))
        delta = 1e-6 * scale
        for k in range(2):
            e = np.eye(2)[k] * delta
            J[:, k] = (exponential(m, p, v + e, tol=1e-9)
                       - exponential(m, p, v - e, tol=1e-9)) / (2 * delta)
        try:
            step = np.linalg.solve(J, r)
        except np.linalg.LinAlgError as exc:
            raise NoConvergence("singular shooting Jacobian") from exc
        v = v - step
    raise NoConvergence(f"shooting residual {float(np.max(np.abs(r))):.3e}")


@dataclass
class JacobiSample:
    t: float
    Y: np.ndarray


def jacobi(m: MetricSpec, p, theta: float, t_max: float, h_theta: float = 0.02,
           n_samples: int = 33, t_bound: float = 8.0, tol: float = 1e-10):
    """Variation field of the geodesic family exp_p(t v(theta)) computed by
    central differences in the indicatrix parameter.

    Returns (samples, sup_F) where sup_F is the empirical bound on
    F(Y(t)) over [0, t_max].
    """
    if t_max > t_bound:
        raise ValueError(f"t_max {t_max} exceeds configured bound {t_bound}")
    p = np.asarray(p, dtype=float)
    ts = np.linspace(0.0, t_max, n_samples)

    def shoot(th):
        v = unit_vector(m, p, th)
        return integrate(m, p, v, t_max, tol=tol).point_at(ts)

    plus = shoot(theta + h_theta)
    minus = shoot(theta - h_theta)
    center = shoot(theta)
    Y = (plus - minus) / (2.0 * h_theta)
    Y[0] = 0.0  # the base point does not move
    sup = 0.0
    samples = []
    for k, t in enumerate(ts):
        samples.append(JacobiSample(float(t), Y[k]))
        if k > 0:
            sup = max(sup, float(norm(m, center[k], Y[k])))
    return samples, sup


def _straight_path(m: MetricSpec, p, disp, n: int = 9) -> GeodesicPath:
    p = np.asarray(p, dtype=float)
    disp = np.asarray(disp, dtype=float)
    L = float(norm(m, p, disp))
    s = np.linspace(0.0, 1.0, n)
    pts = p[None, :] + s[:, None] * disp[None, :]
    v = disp / L
    vel = np.broadcast_to(v, pts.shape).copy()
    return GeodesicPath(s * L, pts, vel, L)


def minimal_geodesic(m: MetricSpec, p, q, domain: Domain | None = None,
                     n_fan: int = 720, tol: float = 1e-8) -> GeodesicPath:
    """Shortest geodesic from p to q.

    Constant-coefficient metrics use straight chart segments (minimizing in
    any Minkowski norm), with a search over lattice translates on a torus.
    Otherwise a dense fan of shootings brackets candidate headings which are
    then polished by Newton on (heading, length).
    """
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    if np.allclose(p, q, atol=1e-15):
        raise ValueError("p and q must differ")

    if m.is_constant:
        shifts = (domain.lattice_shifts(2) if domain is not None
                  else np.zeros((1, 2)))
        cands = (q - p)[None, :] + shifts
        F = norm(m, np.broadcast_to(p, cands.shape), cands)
        best = int(np.argmin(F))
        return _straight_path(m, p, cands[best])

    disp = q - p if domain is None else domain.displacement(p, q)
    L_guess = float(norm(m, p, disp))
    L_max = 1.8 * L_guess + 1e-6

    # coarse fan: miss distance at closest approach, signed cross-track
    thetas = np.linspace(0.0, 2 * np.pi, n_fan, endpoint=False)
    target = p + disp
    miss = np.empty(n_fan)
    t_close = np.empty(n_fan)
    cross = np.empty(n_fan)
    for i, th in enumerate(thetas):
        v = unit_vector(m, p, th)
        path = integrate(m, p, v, L_max, tol=1e-6)
        d2 = np.sum((path.points - target) ** 2, axis=1)
        k = int(np.argmin(d2))
        miss[i] = np.sqrt(d2[k])
        t_close[i] = path.t[k]
        dvec = target - path.points[k]
        vel = path.velocities[k]
        cross[i] = vel[0] * dvec[1] - vel[1] * dvec[0]

    # brackets where the signed cross-track flips and the miss is small
    order = []
    for i in range(n_fan):
        j = (i + 1) % n_fan
        if cross[i] * cross[j] <= 0 and min(miss[i], miss[j]) < 0.2 * L_guess + 0.05:
            order.append((min(miss[i], miss[j]), i))
    if not order:
        raise NotFound("no shooting bracket; fan too coarse or target unreachable")
    order.sort()

    best_path = None
    best_len = np.inf
    for _, i in order[:6]:
        th = thetas[i]
        L = t_close[i]
        x = np.array([th, max(L, 1e-3)])
        ok = False
        for _ in range(30):
            v = unit_vector(m, p, x[0])
            path = integrate(m, p, v, x[1], tol=tol)
            r = path.end - target
            if float(np.max(np.abs(r))) < 1e-9 * max(1.0, L_guess):
                ok = True
                break
            J = np.empty((2, 2))
            dth, dL = 1e-6, 1e-6
            vp = unit_vector(m, p, x[0] + dth)
            vm = unit_vector(m, p, x[0] - dth)
            J[:, 0] = (integrate(m, p, vp, x[1], tol=1e-9).end
                       - integrate(m, p, vm, x[1], tol=1e-9).end) / (2 * dth)
            J[:, 1] = path.velocities[-1]
            try:
                x = x - np.linalg.solve(J, r)
            except np.linalg.LinAlgError:
                break
            x[1] = min(max(x[1], 1e-6), 1.2 * L_max)
        if ok and x[1] < best_len:
            best_len = x[1]
            best_path = path
    if best_path is None:
        raise NotFound("Newton polishing failed on all brackets")
    return best_path


def distance(m: MetricSpec, p, q, domain: Domain | None = None, **kw) -> float:
    """Finslerian distance d(p, q); asymmetric in general."""
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    if np.allclose(p, q, atol=1e-15):
        return 0.0
    return minimal_geodesic(m, p, q, domain=domain, **kw).length
