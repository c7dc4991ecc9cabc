"""Finsler norms on a 2-D chart: evaluation, fundamental tensor, spray.

Every supported metric is represented internally in generalized Randers
form

    F(x, y) = sqrt(y^T a(x) y) + b(x) . y

with a(x) symmetric positive definite and |b|_{a^{-1}} < 1.  Euclidean and
Riemannian metrics are the b = 0 case; Zermelo navigation data (base metric
h, wind W with |W|_h < 1) is converted by the classical translation of the
unit ball.  Coefficient fields carry analytic first derivatives so geodesic
spray coefficients are exact, not finite-differenced.

Point arguments are arrays of shape (..., 2) and broadcast.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .chart import Domain
from .errors import DegenerateTensor, RandersIllPosed, WindTooStrong

EIG_FLOOR = 1e-10  # positive-definiteness floor for the fundamental tensor


# ---------------------------------------------------------------------------
# scalar coefficient fields

class ConstField:
    """Coefficient that does not depend on the chart point."""

    is_constant = True

    def __init__(self, c: float):
        self.c = float(c)

    def value(self, x):
        x = np.asarray(x, dtype=float)
        return np.full(x.shape[:-1], self.c)

    def grad(self, x):
        x = np.asarray(x, dtype=float)
        return np.zeros(x.shape[:-1] + (2,))

    def negated(self):
        return ConstField(-self.c)


class ExprField:
    """Closed-form coefficient given as an expression in x and y.

    Parsed with sympy; the value and both partial derivatives are
    lambdified once at construction.
    """

    is_constant = False

    def __init__(self, expr: str):
        import sympy as sp

        xs, ys = sp.symbols("x y")
        e = sp.sympify(expr, locals={"x": xs, "y": ys})
        self.expr = expr
        self._f = sp.lambdify((xs, ys), e, modules="numpy")
        self._fx = sp.lambdify((xs, ys), sp.diff(e, xs), modules="numpy")
        self._fy = sp.lambdify((xs, ys), sp.diff(e, ys), modules="numpy")

    def _call(self, fn, x):
        x = np.asarray(x, dtype=float)
        out = fn(x[..., 0], x[..., 1])
        return np.broadcast_to(np.asarray(out, dtype=float), x.shape[:-1]).copy()

    def value(self, x):
        return self._call(self._f, x)

    def grad(self, x):
        return np.stack([self._call(self._fx, x), self._call(self._fy, x)], axis=-1)

    def negated(self):
        return ExprField(f"-({self.expr})")


class RasterField:
    """Coefficient sampled on its own uniform grid, bilinearly interpolated.

    The gradient is the exact derivative of the interpolant (piecewise
    constant per cell along each axis).
    """

    is_constant = False

    def __init__(self, origin, spacing: float, data: np.ndarray, periodic: bool = False):
        self.origin = np.asarray(origin, dtype=float)
        self.h = float(spacing)
        self.data = np.asarray(data, dtype=float)
        self.periodic = bool(periodic)

    def _locate(self, x):
        x = np.asarray(x, dtype=float)
        rel = (x - self.origin) / self.h
        nx, ny = self.data.shape
        if self.periodic:
            i0 = np.floor(rel[..., 0]).astype(int) % nx
            j0 = np.floor(rel[..., 1]).astype(int) % ny
            ti = rel[..., 0] - np.floor(rel[..., 0])
            tj = rel[..., 1] - np.floor(rel[..., 1])
            i1, j1 = (i0 + 1) % nx, (j0 + 1) % ny
        else:
            fi = np.clip(rel[..., 0], 0.0, nx - 1.0)
            fj = np.clip(rel[..., 1], 0.0, ny - 1.0)
            i0 = np.minimum(np.floor(fi).astype(int), nx - 2)
            j0 = np.minimum(np.floor(fj).astype(int), ny - 2)
            ti, tj = fi - i0, fj - j0
            i1, j1 = i0 + 1, j0 + 1
        return i0, j0, i1, j1, ti, tj

    def value(self, x):
        i0, j0, i1, j1, ti, tj = self._locate(x)
        d = self.data
        return ((1 - ti) * (1 - tj) * d[i0, j0] + ti * (1 - tj) * d[i1, j0]
                + (1 - ti) * tj * d[i0, j1] + ti * tj * d[i1, j1])

    def grad(self, x):
        i0, j0, i1, j1, ti, tj = self._locate(x)
        d = self.data
        gx = ((d[i1, j0] - d[i0, j0]) * (1 - tj) + (d[i1, j1] - d[i0, j1]) * tj) / self.h
        gy = ((d[i0, j1] - d[i0, j0]) * (1 - ti) + (d[i1, j1] - d[i1, j0]) * ti) / self.h
        return np.stack([gx, gy], axis=-1)

    def negated(self):
        return RasterField(self.origin, self.h, -self.data, self.periodic)


def as_field(v) -> ConstField | ExprField:
    if isinstance(v, (ConstField, ExprField, RasterField)):
        return v
    if isinstance(v, str):
        try:
            return ConstField(float(v))
        except ValueError:
            return ExprField(v)
    return ConstField(float(v))


# ---------------------------------------------------------------------------
# coefficient providers

class RandersCoeffs:
    """Six scalar fields (a11, a12, a22, b1, b2 and derivatives on demand).

    When any coefficient is an expression, all values (and separately all
    gradients) are lambdified into one batched sympy call; per-point
    evaluation cost is what dominates geodesic integration.
    """

    def __init__(self, a11, a12, a22, b1=0.0, b2=0.0):
        self.fields = tuple(as_field(f) for f in (a11, a12, a22, b1, b2))
        self._val_fn = None
        self._grad_fn = None
        self._const = None
        if self.is_constant:
            c = [f.c for f in self.fields]
            a = np.array([[c[0], c[1]], [c[1], c[2]]])
            b = np.array([c[3], c[4]])
            self._const = (a, b, np.zeros((2, 2, 2)), np.zeros((2, 2)))
        else:
            self._compile()

    def _compile(self):
        import sympy as sp

        xs, ys = sp.symbols("x y")
        exprs = []
        for f in self.fields:
            if isinstance(f, ConstField):
                exprs.append(sp.Float(f.c))
            elif isinstance(f, ExprField):
                exprs.append(sp.sympify(f.expr, locals={"x": xs, "y": ys}))
            else:
                return  # raster fields keep the per-field path
        grads = []
        for e in exprs:
            grads.extend([sp.diff(e, xs), sp.diff(e, ys)])
        self._val_fn = sp.lambdify((xs, ys), exprs, modules="numpy")
        self._grad_fn = sp.lambdify((xs, ys), grads, modules="numpy")

    @property
    def is_constant(self) -> bool:
        return all(f.is_constant for f in self.fields)

    def _values(self, x):
        if self._val_fn is not None:
            base = x.shape[:-1]
            out = self._val_fn(x[..., 0], x[..., 1])
            return [np.broadcast_to(np.asarray(o, dtype=float), base) for o in out]
        return [f.value(x) for f in self.fields]

    def _grads(self, x):
        base = x.shape[:-1]
        if self._grad_fn is not None:
            out = self._grad_fn(x[..., 0], x[..., 1])
            out = [np.broadcast_to(np.asarray(o, dtype=float), base) for o in out]
            return [np.stack([out[2 * i], out[2 * i + 1]], axis=-1) for i in range(5)]
        return [f.grad(x) for f in self.fields]

    def coeffs(self, x, derivs: bool = False):
        x = np.asarray(x, dtype=float)
        base = x.shape[:-1]
        if self._const is not None:
            a0, b0, da0, db0 = self._const
            a = np.broadcast_to(a0, base + (2, 2))
            b = np.broadcast_to(b0, base + (2,))
            if not derivs:
                return a, b, None, None
            return (a, b, np.broadcast_to(da0, base + (2, 2, 2)),
                    np.broadcast_to(db0, base + (2, 2)))
        a11, a12, a22, b1, b2 = self._values(x)
        a = np.empty(base + (2, 2))
        a[..., 0, 0] = a11
        a[..., 0, 1] = a12
        a[..., 1, 0] = a12
        a[..., 1, 1] = a22
        b = np.empty(base + (2,))
        b[..., 0] = b1
        b[..., 1] = b2
        if not derivs:
            return a, b, None, None
        g11, g12, g22, gb1, gb2 = self._grads(x)
        da = np.empty(base + (2, 2, 2))  # da[..., k, i, j] = d a_ij / d x^k
        db = np.empty(base + (2, 2))     # db[..., k, i] = d b_i / d x^k
        for k in range(2):
            da[..., k, 0, 0] = g11[..., k]
            da[..., k, 0, 1] = g12[..., k]
            da[..., k, 1, 0] = g12[..., k]
            da[..., k, 1, 1] = g22[..., k]
            db[..., k, 0] = gb1[..., k]
            db[..., k, 1] = gb2[..., k]
        return a, b, da, db

    def reversed(self):
        f = self.fields
        return RandersCoeffs(f[0], f[1], f[2], f[3].negated(), f[4].negated())


class ZermeloCoeffs:
    """Randers data derived pointwise from a constant base metric h and a
    position-dependent wind (e.g. a bilinear raster).  Derivatives come from
    the chain rule through lambda = 1 - |W|_h^2.
    """

    def __init__(self, h: np.ndarray, w1, w2):
        self.h = np.asarray(h, dtype=float).reshape(2, 2)
        self.w = (as_field(w1), as_field(w2))

    @property
    def is_constant(self) -> bool:
        return all(f.is_constant for f in self.w)

    def coeffs(self, x, derivs: bool = False):
        x = np.asarray(x, dtype=float)
        W = np.stack([self.w[0].value(x), self.w[1].value(x)], axis=-1)
        h = self.h
        Wl = W @ h.T                      # lowered wind, W_i = h_ij W^j
        lam = 1.0 - np.einsum("...i,...i->...", Wl, W)
        if np.any(lam <= 1e-12):
            raise RandersIllPosed("wind reaches unit h-speed at an evaluation point")
        a = (h / lam[..., None, None]
             + Wl[..., :, None] * Wl[..., None, :] / lam[..., None, None] ** 2)
        b = -Wl / lam[..., None]
        if not derivs:
            return a, b, None, None
        dW = np.stack([self.w[0].grad(x), self.w[1].grad(x)], axis=-2)
        # dW[..., i, k] = d W^i / d x^k  ->  reorder to [..., k, i]
        dW = np.swapaxes(dW, -1, -2)
        dWl = dW @ h.T                    # [..., k, i] = d W_i / d x^k
        dlam = -2.0 * np.einsum("...i,...ki->...k", Wl, dW)
        l1 = lam[..., None, None, None]
        dl = dlam[..., :, None, None]
        da = (-h * dl / l1 ** 2
              + (dWl[..., :, :, None] * Wl[..., None, None, :]
                 + Wl[..., None, :, None] * dWl[..., :, None, :]) / l1 ** 2
              - 2.0 * Wl[..., None, :, None] * Wl[..., None, None, :] * dl / l1 ** 3)
        db = -dWl / lam[..., None, None] + Wl[..., None, :] * dlam[..., :, None] / lam[..., None, None] ** 2
        return a, b, da, db

    def reversed(self):
        return ZermeloCoeffs(self.h, self.w[0].negated(), self.w[1].negated())


# ---------------------------------------------------------------------------
# metric spec

@dataclass(frozen=True)
class MetricSpec:
    """A Finsler norm on the chart, immutable and safe to share across
    threads.  ``kind`` is one of euclidean | riemannian | randers."""

    kind: str
    provider: RandersCoeffs | ZermeloCoeffs

    @property
    def is_constant(self) -> bool:
        return self.provider.is_constant

    def coeffs(self, x, derivs: bool = False):
        return self.provider.coeffs(x, derivs)

    def reversed(self) -> "MetricSpec":
        """Metric with F~(x, v) = F(x, -v); its geodesics are the reversed
        geodesics of this one."""
        return MetricSpec(self.kind, self.provider.reversed())


def make_euclidean() -> MetricSpec:
    return MetricSpec("euclidean", RandersCoeffs(1.0, 0.0, 1.0))


def make_riemannian(a11, a12, a22) -> MetricSpec:
    return MetricSpec("riemannian", RandersCoeffs(a11, a12, a22))


def make_zermelo(h, wind, domain: Domain | None = None, n_check: int = 33) -> MetricSpec:
    """Randers metric of time-optimal navigation under wind ``wind`` with
    self-speed given by the Riemannian metric ``h``.

    ``h`` is a constant 2x2 SPD matrix (or the scalar 1 for Euclidean);
    ``wind`` is a pair of coefficients (constants, expressions or rasters).
    Raises :class:`WindTooStrong` if |W|_h >= 1 anywhere on the validation
    sample of ``domain``.
    """
    h = np.asarray(h, dtype=float)
    if h.ndim == 0:
        h = np.eye(2) * float(h)
    if h.shape != (2, 2) or not np.allclose(h, h.T):
        raise ValueError("base metric h must be a symmetric 2x2 matrix")
    if np.linalg.eigvalsh(h).min() <= 0:
        raise ValueError("base metric h must be positive definite")
    w1, w2 = (as_field(w) for w in wind)

    if w1.is_constant and w2.is_constant:
        W = np.array([w1.c, w2.c])
        lam = 1.0 - W @ h @ W
        if lam <= 1e-9:
            raise WindTooStrong(f"|W|_h^2 = {W @ h @ W:.6g} >= 1")
        Wl = h @ W
        a = h / lam + np.outer(Wl, Wl) / lam**2
        b = -Wl / lam
        prov = RandersCoeffs(a[0, 0], a[0, 1], a[1, 1], b[0], b[1])
        return MetricSpec("randers", prov)

    prov = ZermeloCoeffs(h, w1, w2)
    if domain is not None:
        xs = np.linspace(domain.xmin, domain.xmax, n_check)
        ys = np.linspace(domain.ymin, domain.ymax, n_check)
        pts = np.stack(np.meshgrid(xs, ys, indexing="ij"), axis=-1)
        W = np.stack([w1.value(pts), w2.value(pts)], axis=-1)
        speed2 = np.einsum("...i,ij,...j->...", W, h, W)
        if speed2.max() >= 1.0 - 1e-9:
            raise WindTooStrong(f"max |W|_h^2 = {speed2.max():.6g} on validation grid")
    return MetricSpec("randers", prov)


# ---------------------------------------------------------------------------
# norm, tensor, spray

def _alpha_beta(a, b, v):
    al2 = np.einsum("...i,...ij,...j->...", v, a, v)
    al = np.sqrt(np.maximum(al2, 0.0))
    be = np.einsum("...i,...i->...", b, v)
    return al, be


def norm(m: MetricSpec, x, v) -> np.ndarray | float:
    """F(x, v).  Zero vectors give 0; negative results (possible only for
    ill-posed Randers data) raise :class:`RandersIllPosed`."""
    x = np.asarray(x, dtype=float)
    v = np.asarray(v, dtype=float)
    a, b, _, _ = m.coeffs(x)
    al, be = _alpha_beta(a, b, v)
    F = al + be
    bad = (F < -1e-12) | ((F <= 0) & (al > 0))
    if np.any(bad):
        raise RandersIllPosed("norm non-positive on a nonzero vector")
    out = np.maximum(F, 0.0)
    return float(out) if out.ndim == 0 else out


def _tensor_from_coeffs(a, b, v):
    al, be = _alpha_beta(a, b, v)
    al = np.where(al == 0, 1e-300, al)
    F = al + be
    yl = np.einsum("...ij,...j->...i", a, v)
    ell = yl / al[..., None] + b
    g = (ell[..., :, None] * ell[..., None, :]
         + (F / al)[..., None, None]
         * (a - yl[..., :, None] * yl[..., None, :] / (al**2)[..., None, None]))
    return g


def fundamental_tensor(m: MetricSpec, x, v) -> np.ndarray:
    """Fiber Hessian of F^2/2 at (x, v), v != 0.  Symmetric positive
    definite for admissible data; raises :class:`DegenerateTensor` below the
    eigenvalue floor."""
    x = np.asarray(x, dtype=float)
    v = np.asarray(v, dtype=float)
    if np.any(np.all(v == 0.0, axis=-1)):
        raise ValueError("fundamental tensor undefined at the zero vector")
    a, b, _, _ = m.coeffs(x)
    g = _tensor_from_coeffs(a, b, v)
    tr = g[..., 0, 0] + g[..., 1, 1]
    det = g[..., 0, 0] * g[..., 1, 1] - g[..., 0, 1] ** 2
    eig_min = 0.5 * (tr - np.sqrt(np.maximum(tr**2 - 4 * det, 0.0)))
    if np.any(eig_min <= EIG_FLOOR):
        raise DegenerateTensor(f"min eigenvalue {float(np.min(eig_min)):.3e}")
    return g


def g_inner(m: MetricSpec, x, w, u, v) -> np.ndarray | float:
    """g_w(u, v), the inner product induced at reference vector w."""
    g = fundamental_tensor(m, x, w)
    out = np.einsum("...i,...ij,...j->...", u, g, v)
    return float(out) if out.ndim == 0 else out


def g_angle(m: MetricSpec, x, w1, w2) -> np.ndarray | float:
    """Angle between w1 and w2 measured in the g_{w1} inner product."""
    g = fundamental_tensor(m, x, w1)
    n1 = np.sqrt(np.einsum("...i,...ij,...j->...", w1, g, w1))
    n2 = np.sqrt(np.einsum("...i,...ij,...j->...", w2, g, w2))
    c = np.einsum("...i,...ij,...j->...", w1, g, w2) / (n1 * n2)
    out = np.arccos(np.clip(c, -1.0, 1.0))
    return float(out) if out.ndim == 0 else out


def spray(m: MetricSpec, x, v) -> np.ndarray:
    """Geodesic acceleration (x'', y'') for the constant-speed geodesic
    equation derived from the energy F^2/2.  2-homogeneous in v."""
    x = np.asarray(x, dtype=float)
    v = np.asarray(v, dtype=float)
    a, b, da, db = m.coeffs(x, derivs=True)
    al, be = _alpha_beta(a, b, v)
    if np.any(al == 0):
        raise ValueError("spray undefined at the zero vector")
    F = al + be
    yl = np.einsum("...ij,...j->...i", a, v)
    ell = yl / al[..., None] + b

    # A_k = d alpha/d x^k, B_k = d beta/d x^k at fixed fiber coordinates
    day = np.einsum("...kij,...j->...ki", da, v)
    A = np.einsum("...i,...ki->...k", v, day) / (2.0 * al[..., None])
    B = np.einsum("...ki,...i->...k", db, v)
    E_x = F[..., None] * (A + B)

    psi = np.einsum("...k,...k->...", A + B, v)
    # d psi / d y^m
    dA_dy = day / al[..., None, None] - A[..., :, None] * yl[..., None, :] / (al**2)[..., None, None]
    dpsi = (np.einsum("...k,...km->...m", v, dA_dy + db)
            + A + B)
    dphi = ell * psi[..., None] + F[..., None] * dpsi
    rhs = 2.0 * E_x - dphi

    g = _tensor_from_coeffs(a, b, v)
    det = g[..., 0, 0] * g[..., 1, 1] - g[..., 0, 1] ** 2
    if np.any(np.abs(det) < 1e-300):
        raise DegenerateTensor("singular fundamental tensor in spray")
    acc0 = (g[..., 1, 1] * rhs[..., 0] - g[..., 0, 1] * rhs[..., 1]) / det
    acc1 = (g[..., 0, 0] * rhs[..., 1] - g[..., 0, 1] * rhs[..., 0]) / det
    return np.stack([acc0, acc1], axis=-1)


def unit_vector(m: MetricSpec, x, theta) -> np.ndarray:
    """Indicatrix parametrization: the F-unit vector at Euclidean angle theta."""
    theta = np.asarray(theta, dtype=float)
    e = np.stack([np.cos(theta), np.sin(theta)], axis=-1)
    F = norm(m, np.broadcast_to(np.asarray(x, float), e.shape), e)
    return e / np.asarray(F)[..., None]


def normalize(m: MetricSpec, x, v) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    F = norm(m, x, v)
    return v / np.asarray(F)[..., None]


def lipschitz_bound(m: MetricSpec, points, n_dirs: int = 90) -> float:
    """max F over Euclidean-unit directions at the sample points; the
    Lipschitz constant of chart-coordinate distance functions."""
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    th = np.linspace(0.0, 2 * np.pi, n_dirs, endpoint=False)
    e = np.stack([np.cos(th), np.sin(th)], axis=-1)
    F = norm(m, pts[:, None, :], e[None, :, :])
    return float(np.max(F))


def direction_ratio(m: MetricSpec, points, n_dirs: int = 360) -> float:
    """max F / min F over directions; an anisotropy measure."""
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    th = np.linspace(0.0, 2 * np.pi, n_dirs, endpoint=False)
    e = np.stack([np.cos(th), np.sin(th)], axis=-1)
    F = norm(m, pts[:, None, :], e[None, :, :])
    return float(np.max(F) / np.min(F))
