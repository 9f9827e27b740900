"""Scatterplot smoothers estimating ``E[y | x]`` for one or two inputs.

Methods: ``moving_average`` (box window), ``linear`` (global least
squares), ``loess`` (tricube-weighted local polynomial on the nearest
``span * n`` points) and ``kernel`` (Gaussian Nadaraya-Watson).

Local methods are evaluated exactly at a set of anchor points and
interpolated in between: cubic Hermite through the local values and slopes
for 1-d loess, a bicubic spline over an anchor grid for 2-d loess, and
shape-preserving interpolation for the kernel smoother so predictions stay
inside the range of the data.  Queries outside the training box are clamped
to its boundary.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np
from scipy.interpolate import CubicHermiteSpline, PchipInterpolator, RectBivariateSpline, RegularGridInterpolator

__all__ = ["SmootherConfig", "Smoother", "FitError", "fit", "fit_many", "METHODS"]

METHODS = ("moving_average", "linear", "loess", "kernel")
MIN_SAMPLES = 20


class FitError(ValueError):
    """The data cannot support the requested smoother."""


@dataclass(frozen=True)
class SmootherConfig:
    """Smoother settings.

    ``span`` is the loess neighbourhood as a fraction of the sample;
    ``bandwidth`` is the kernel standard deviation or the moving-average
    half-width in the units of ``x`` (``None`` picks Silverman's rule per
    coordinate); ``degree`` is the loess local polynomial degree.
    """

    method: str = "loess"
    span: float = 0.3
    bandwidth: float | None = None
    degree: int = 2
    n_anchors: int | None = None

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"unknown smoothing method {self.method!r}; choose from {METHODS}")
        if not 0 < self.span <= 1:
            raise ValueError("span must lie in (0, 1]")
        if self.bandwidth is not None and not self.bandwidth > 0:
            raise ValueError("bandwidth must be > 0")
        if self.degree not in (1, 2):
            raise ValueError("degree must be 1 or 2")
        if self.n_anchors is not None and self.n_anchors < 4:
            raise ValueError("n_anchors must be >= 4")

    def to_dict(self):
        return {k: v for k, v in asdict(self).items() if v is not None}

    @classmethod
    def from_dict(cls, d):
        allowed = {"method", "span", "bandwidth", "degree", "n_anchors"}
        extra = sorted(set(d) - allowed)
        if extra:
            raise ValueError(f"unknown smoother field(s) {extra}")
        return cls(**d)


def silverman_bandwidth(x, d=1):
    n = len(x)
    sd = np.std(x)
    q75, q25 = np.percentile(x, [75, 25])
    a = min(sd, (q75 - q25) / 1.34) if q75 > q25 else sd
    return 0.9 * a * n ** (-1.0 / (4 + d))


class Smoother:
    """A fitted estimator of ``E[y | x]`` with ``x`` of dimension ``d``."""

    method = ""

    def __init__(self, d, lo, hi):
        self.d = d
        self.lo = np.asarray(lo, dtype=float)
        self.hi = np.asarray(hi, dtype=float)

    def _clamp(self, x):
        x = np.asarray(x, dtype=float)
        if self.d == 1 and x.ndim == 2 and x.shape[1] == 1:
            x = x[:, 0]
        if self.d == 1:
            if x.ndim != 1:
                raise ValueError(f"expected 1-d query points, got shape {x.shape}")
            return np.clip(x, self.lo[0], self.hi[0])
        if x.ndim != 2 or x.shape[1] != self.d:
            raise ValueError(f"expected query shape (m, {self.d}), got {x.shape}")
        return np.clip(x, self.lo, self.hi)

    def predict_batch(self, x):
        return self._predict(self._clamp(x))

    def predict(self, x):
        """Prediction at a single point (a scalar when ``d == 1``)."""
        x = np.atleast_1d(np.asarray(x, dtype=float))
        if x.shape != (self.d,):
            raise ValueError(f"expected {self.d} coordinate(s), got {x.shape}")
        q = x if self.d == 1 else x[None, :]
        return float(self.predict_batch(q)[0])

    def __call__(self, x):
        return self.predict_batch(x)

    def _predict(self, x):
        raise NotImplementedError


class _Linear(Smoother):
    method = "linear"

    def __init__(self, x, y, lo, hi):
        super().__init__(x.shape[1], lo, hi)
        self.x0 = x.mean(axis=0)
        X = np.column_stack([np.ones(len(x)), x - self.x0])
        self.coef, *_ = np.linalg.lstsq(X, y, rcond=None)

    def _predict(self, x):
        x = x.reshape(len(x), -1)
        return self.coef[0] + (x - self.x0) @ self.coef[1:]


class _Interp1D(Smoother):
    def __init__(self, lo, hi, f, const=None):
        super().__init__(1, lo, hi)
        self._f = f
        self._const = const

    def _predict(self, x):
        if self._const is not None:
            return np.full(len(x), self._const)
        return self._f(x)


class _Grid2D(Smoother):
    def __init__(self, lo, hi, f):
        super().__init__(2, lo, hi)
        self._f = f

    def _predict(self, x):
        return self._f(x)


class _MovingAverage1D(Smoother):
    method = "moving_average"

    def __init__(self, xs, ys, h):
        super().__init__(1, [xs[0]], [xs[-1]])
        self.xs, self.h = xs, h
        self.cs = np.concatenate([[0.0], np.cumsum(ys)])
        self.ys = ys

    def _predict(self, x):
        lo = np.searchsorted(self.xs, x - self.h, "left")
        hi = np.searchsorted(self.xs, x + self.h, "right")
        cnt = hi - lo
        out = np.empty(len(x))
        ok = cnt > 0
        out[ok] = (self.cs[hi[ok]] - self.cs[lo[ok]]) / cnt[ok]
        if not ok.all():
            j = np.clip(np.searchsorted(self.xs, x[~ok]), 1, len(self.xs) - 1)
            left = np.abs(x[~ok] - self.xs[j - 1]) <= np.abs(self.xs[j] - x[~ok])
            out[~ok] = self.ys[np.where(left, j - 1, j)]
        return out


class _MovingAverage2D(Smoother):
    method = "moving_average"

    def __init__(self, x, y, h, lo, hi):
        super().__init__(2, lo, hi)
        order = np.argsort(x[:, 0], kind="stable")
        self.x, self.y, self.h = x[order], y[order], h

    def _predict(self, q):
        uq, inv = np.unique(q, axis=0, return_inverse=True)
        vals = np.empty(len(uq))
        x0 = self.x[:, 0]
        for i, p in enumerate(uq):
            a = np.searchsorted(x0, p[0] - self.h[0], "left")
            b = np.searchsorted(x0, p[0] + self.h[0], "right")
            sel = np.abs(self.x[a:b, 1] - p[1]) <= self.h[1]
            if sel.any():
                vals[i] = self.y[a:b][sel].mean()
            else:
                dist = np.max(np.abs(self.x - p) / self.h, axis=1)
                vals[i] = self.y[np.argmin(dist)]
        return vals[inv.ravel()]


# -- loess ----------------------------------------------------------------


def _knn_radius_sorted(xs, anchors, k):
    """Distance from each anchor to its k-th nearest point of sorted ``xs``."""
    n = len(xs)
    i = np.searchsorted(xs, anchors)
    lo = np.maximum(0, i - k)
    hi = np.minimum(i, n - k)
    # the k nearest points form xs[j:j+k]; find the smallest j with
    # anchor - xs[j] <= xs[j+k] - anchor by bisection
    while np.any(lo < hi):
        mid = (lo + hi) // 2
        nxt = np.minimum(mid + k, n - 1)
        move = (anchors - xs[mid]) > (xs[nxt] - anchors)
        move &= mid + k < n
        lo = np.where(move & (lo < hi), mid + 1, lo)
        hi = np.where(~move & (lo < hi), mid, hi)
    j = lo
    return np.maximum(anchors - xs[j], xs[np.minimum(j + k - 1, n - 1)] - anchors)


def _solve_normal(X, w, Y):
    """Weighted least squares via normal equations, ``None`` if ill-conditioned."""
    Xw = X * w[:, None]
    A = Xw.T @ X
    try:
        cond = np.linalg.cond(A)
    except np.linalg.LinAlgError:
        return None
    if not np.isfinite(cond) or cond > 1e10:
        return None
    return np.linalg.solve(A, Xw.T @ Y)


def _local_fit(t, w, Y, degree):
    """Weighted polynomial fit in the scaled offset ``t``; coefficients per column of ``Y``.

    Falls back to lower degrees when the local design is rank deficient
    (e.g. fewer distinct ``t`` than coefficients).
    """
    wt = w * t
    wt2 = wt * t
    mom = [w.sum(), wt.sum(), wt2.sum(), (wt2 * t).sum(), (wt2 * t * t).sum()]
    rhs = [w @ Y, wt @ Y, wt2 @ Y]
    for deg in range(degree, -1, -1):
        p = deg + 1
        A = np.array([[mom[i + j] for j in range(p)] for i in range(p)])
        if p == 1:
            ok = A[0, 0] > 0
        else:
            ok = np.linalg.cond(A) < 1e10
        if ok:
            coef = np.linalg.solve(A, np.vstack(rhs[:p]))
            break
    else:
        coef = np.mean(Y, axis=0, keepdims=True)
    if coef.shape[0] < 2:
        coef = np.vstack([coef, np.zeros((1, coef.shape[1]))])
    return coef


def _tricube(u):
    u = np.minimum(np.abs(u), 1.0)
    v = 1.0 - u * u * u
    return v * v * v


def _anchors_1d(xs, count):
    ux = np.unique(xs)
    if len(ux) <= 2 * count:
        return ux
    q = np.quantile(xs, np.linspace(0, 1, count))
    e = np.linspace(xs[0], xs[-1], count)
    return np.unique(np.concatenate([q, e]))


def _loess_1d(xs, Y, cfg):
    n = len(xs)
    k = min(n, max(cfg.degree + 2, int(math.ceil(cfg.span * n))))
    count = cfg.n_anchors or int(np.clip(60.0 / cfg.span, 50, 400))
    anchors = _anchors_1d(xs, count)
    h = _knn_radius_sorted(xs, anchors, k)
    gaps = np.diff(np.unique(xs))
    tiny = gaps.min() if len(gaps) else 1.0
    h = np.maximum(h, tiny) * (1.0 + 1e-9)
    vals = np.empty((len(anchors), Y.shape[1]))
    slopes = np.empty_like(vals)
    for a, (x0, r) in enumerate(zip(anchors, h)):
        lo = np.searchsorted(xs, x0 - r, "left")
        hi = np.searchsorted(xs, x0 + r, "right")
        t = (xs[lo:hi] - x0) / r
        coef = _local_fit(t, _tricube(t), Y[lo:hi], cfg.degree)
        vals[a] = coef[0]
        slopes[a] = coef[1] / r
    return anchors, vals, slopes


def _standardize(x):
    q75, q25 = np.percentile(x, [75, 25], axis=0)
    scale = q75 - q25
    sd = x.std(axis=0)
    scale = np.where(scale > 0, scale, sd)
    return np.median(x, axis=0), scale


def _grid_axis(col, count):
    u = np.unique(col)
    if len(u) <= count:
        return u
    q = np.quantile(col, np.linspace(0, 1, count))
    e = np.linspace(col.min(), col.max(), count)
    return np.unique(np.concatenate([q, e]))


def _loess_2d(x, Y, cfg):
    n = len(x)
    k = min(n, max(8, int(math.ceil(cfg.span * n))))
    center, scale = _standardize(x)
    z = (x - center) / scale
    count = cfg.n_anchors or 12
    gx = _grid_axis(x[:, 0], count)
    gy = _grid_axis(x[:, 1], count)
    vals = np.empty((len(gx), len(gy), Y.shape[1]))
    for i, ax in enumerate(gx):
        for j, ay in enumerate(gy):
            z0 = (np.array([ax, ay]) - center) / scale
            diff = z - z0
            dist = np.sqrt(np.einsum("ij,ij->i", diff, diff))
            idx = np.argpartition(dist, k - 1)[:k]
            r = dist[idx].max()
            r = r * (1.0 + 1e-9) if r > 0 else 1.0
            dz = diff[idx] / r
            w = _tricube(dist[idx] / r)
            cols = [np.ones(k), dz[:, 0], dz[:, 1]]
            if cfg.degree == 2:
                cols += [dz[:, 0] ** 2, dz[:, 0] * dz[:, 1], dz[:, 1] ** 2]
            X = np.column_stack(cols)
            coef = _solve_normal(X, w, Y[idx])
            if coef is None:
                coef = _solve_normal(X[:, :3], w, Y[idx])
            if coef is None:
                coef = (w @ Y[idx] / w.sum())[None, :]
            vals[i, j] = coef[0]
    return gx, gy, vals


def _grid_interpolant(gx, gy, v):
    if len(gx) >= 2 and len(gy) >= 2:
        spline = RectBivariateSpline(gx, gy, v, kx=min(3, len(gx) - 1), ky=min(3, len(gy) - 1), s=0)
        return lambda q: spline.ev(q[:, 0], q[:, 1])
    return lambda q: RegularGridInterpolator((gx, gy), v, bounds_error=False, fill_value=None)(q)


# -- kernel ---------------------------------------------------------------


def _kernel_1d(xs, Y, h, count):
    span = xs[-1] - xs[0]
    m = int(np.clip(math.ceil(3 * span / h) + 1, 16, 4096))
    anchors = _anchors_1d(xs, max(count, m))
    vals = np.empty((len(anchors), Y.shape[1]))
    for a, x0 in enumerate(anchors):
        lo = np.searchsorted(xs, x0 - 6 * h, "left")
        hi = np.searchsorted(xs, x0 + 6 * h, "right")
        w = np.exp(-0.5 * ((xs[lo:hi] - x0) / h) ** 2)
        sw = w.sum()
        if sw > 1e-300:
            vals[a] = w @ Y[lo:hi] / sw
        else:
            vals[a] = Y[np.argmin(np.abs(xs - x0))]
    return anchors, vals


def _kernel_2d(x, Y, h, count):
    gx = _grid_axis(x[:, 0], count)
    gy = _grid_axis(x[:, 1], count)
    vals = np.empty((len(gx), len(gy), Y.shape[1]))
    for i, ax in enumerate(gx):
        lw = -0.5 * ((x[:, 0] - ax) / h[0]) ** 2
        for j, ay in enumerate(gy):
            e = lw - 0.5 * ((x[:, 1] - ay) / h[1]) ** 2
            w = np.exp(e - e.max())
            vals[i, j] = w @ Y / w.sum()
    return gx, gy, vals


# -- public API -----------------------------------------------------------


def _prepare(x, Y):
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    if x.ndim != 2 or x.shape[1] not in (1, 2):
        raise FitError("smoothing supports 1 or 2 conditioning variables")
    Y = np.asarray(Y, dtype=float)
    if Y.ndim == 1:
        Y = Y[:, None]
    n = x.shape[0]
    if Y.shape[0] != n:
        raise FitError("x and y have different lengths")
    if n < MIN_SAMPLES:
        raise FitError(f"need at least {MIN_SAMPLES} samples, got {n}")
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(Y))):
        raise FitError("non-finite values in smoother input")
    if np.any(x.max(axis=0) == x.min(axis=0)):
        raise FitError("a conditioning column has zero variance")
    return x, Y


def fit_many(x, Y, cfg: SmootherConfig | None = None):
    """Fit one smoother per column of ``Y`` sharing neighbourhoods and weights."""
    cfg = cfg or SmootherConfig()
    x, Y = _prepare(x, Y)
    d = x.shape[1]
    lo, hi = x.min(axis=0), x.max(axis=0)
    # sort rows so the result does not depend on the input order
    keys = [Y[:, j] for j in range(Y.shape[1] - 1, -1, -1)] + [x[:, j] for j in range(d - 1, -1, -1)]
    order = np.lexsort(keys)
    x, Y = x[order], Y[order]
    if cfg.method == "linear":
        return [_tag(_Linear(x, Y[:, j], lo, hi), cfg) for j in range(Y.shape[1])]
    if cfg.bandwidth is not None:
        h = np.full(d, cfg.bandwidth)
    else:
        h = np.array([silverman_bandwidth(x[:, j], d) for j in range(d)])
        h = np.where(h > 0, h, (hi - lo) / 10)
    if d == 1:
        xs = x[:, 0]
        if cfg.method == "moving_average":
            return [_tag(_MovingAverage1D(xs, Y[:, j], h[0]), cfg) for j in range(Y.shape[1])]
        if cfg.method == "kernel":
            anchors, vals = _kernel_1d(xs, Y, h[0], cfg.n_anchors or 256)
            return [_tag(_pchip(lo, hi, anchors, vals[:, j]), cfg) for j in range(Y.shape[1])]
        anchors, vals, slopes = _loess_1d(xs, Y, cfg)
        out = []
        for j in range(Y.shape[1]):
            if len(anchors) == 1:
                s = _Interp1D(lo, hi, None, const=float(vals[0, j]))
            else:
                s = _Interp1D(lo, hi, CubicHermiteSpline(anchors, vals[:, j], slopes[:, j]))
            out.append(_tag(s, cfg))
        return out
    if cfg.method == "moving_average":
        return [_tag(_MovingAverage2D(x, Y[:, j], h, lo, hi), cfg) for j in range(Y.shape[1])]
    if cfg.method == "kernel":
        gx, gy, vals = _kernel_2d(x, Y, h, cfg.n_anchors or 40)
        return [
            _tag(_Grid2D(lo, hi, RegularGridInterpolator((gx, gy), vals[:, :, j])), cfg)
            for j in range(Y.shape[1])
        ]
    gx, gy, vals = _loess_2d(x, Y, cfg)
    return [_tag(_Grid2D(lo, hi, _grid_interpolant(gx, gy, vals[:, :, j])), cfg) for j in range(Y.shape[1])]


def _pchip(lo, hi, anchors, v):
    if len(anchors) == 1:
        return _Interp1D(lo, hi, None, const=float(v[0]))
    return _Interp1D(lo, hi, PchipInterpolator(anchors, v))


def _tag(s, cfg):
    s.method = cfg.method
    s.config = cfg
    return s


def fit(x, y, cfg: SmootherConfig | None = None) -> Smoother:
    """Fit a smoother of ``y`` on ``x`` (``n`` or ``(n, d)`` with ``d`` in {1, 2})."""
    y = np.asarray(y, dtype=float)
    if y.ndim != 1:
        raise FitError("y must be one-dimensional; use fit_many for several columns")
    return fit_many(x, y, cfg)[0]
