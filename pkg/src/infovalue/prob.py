"""Univariate distributions, reproducible random streams and 1-d quadrature.

Four families are supported: ``gumbel`` (location/scale, maximum-value
convention), ``normal``, ``lognormal`` (given by the mean and standard
deviation of the variable itself) and ``uniform``.  Sampling is by inverse
transform from a counter-based stream so that draws depend only on
``(seed, stream_id)`` and on the block layout, never on the number of worker
threads.
"""

from __future__ import annotations

import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate as _integrate
from scipy import special

__all__ = [
    "DistributionSpec",
    "RandomSource",
    "IntegrationError",
    "pdf",
    "cdf",
    "quantile",
    "sample",
    "integrate",
    "expect",
    "EULER_GAMMA",
]

EULER_GAMMA = float(np.euler_gamma)

# Names of the parameters of each family, in constructor order.
_PARAMS = {
    "gumbel": ("loc", "scale"),
    "normal": ("mean", "std"),
    "lognormal": ("mean", "std"),
    "uniform": ("lower", "upper"),
}

_BLOCK = 1 << 16


class IntegrationError(ArithmeticError):
    """Adaptive quadrature did not reach the requested tolerance.

    The best available estimate and its error bound are kept on the
    exception so callers can decide whether to accept them.
    """

    def __init__(self, message, estimate, abserr):
        super().__init__(message)
        self.estimate = estimate
        self.abserr = abserr


@dataclass(frozen=True)
class DistributionSpec:
    """A validated univariate distribution.

    Use the classmethod constructors (``gumbel``, ``normal``, ``lognormal``,
    ``uniform``) or :meth:`from_dict` rather than the raw initializer.
    """

    kind: str
    params: tuple[float, ...]
    # log-space parameters of a lognormal, derived at construction
    _log: tuple[float, float] | None = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        if self.kind not in _PARAMS:
            raise ValueError(f"unknown distribution kind {self.kind!r}")
        if len(self.params) != 2:
            raise ValueError(f"{self.kind} takes 2 parameters, got {len(self.params)}")
        p0, p1 = (float(v) for v in self.params)
        if not (math.isfinite(p0) and math.isfinite(p1)):
            raise ValueError(f"{self.kind} parameters must be finite")
        object.__setattr__(self, "params", (p0, p1))
        if self.kind == "uniform":
            if not p0 < p1:
                raise ValueError("uniform requires lower < upper")
        elif p1 <= 0:
            raise ValueError(f"{self.kind} {_PARAMS[self.kind][1]} must be > 0")
        if self.kind == "lognormal":
            if p0 <= 0:
                raise ValueError("lognormal mean must be > 0")
            s2 = math.log1p((p1 / p0) ** 2)
            object.__setattr__(self, "_log", (math.log(p0) - 0.5 * s2, math.sqrt(s2)))

    @classmethod
    def gumbel(cls, loc, scale=1.0):
        return cls("gumbel", (loc, scale))

    @classmethod
    def normal(cls, mean, std):
        return cls("normal", (mean, std))

    @classmethod
    def lognormal(cls, mean, std):
        return cls("lognormal", (mean, std))

    @classmethod
    def uniform(cls, lower, upper):
        return cls("uniform", (lower, upper))

    @property
    def log_params(self):
        """``(mu, sigma)`` of ``log X`` for a lognormal spec."""
        if self._log is None:
            raise AttributeError("log_params is only defined for lognormal specs")
        return self._log

    @property
    def mean(self):
        a, b = self.params
        if self.kind == "gumbel":
            return a + EULER_GAMMA * b
        if self.kind == "uniform":
            return 0.5 * (a + b)
        return a

    @property
    def std(self):
        a, b = self.params
        if self.kind == "gumbel":
            return math.pi / math.sqrt(6.0) * b
        if self.kind == "uniform":
            return (b - a) / math.sqrt(12.0)
        return b

    @property
    def support(self):
        if self.kind == "lognormal":
            return (0.0, math.inf)
        if self.kind == "uniform":
            return self.params
        return (-math.inf, math.inf)

    def to_dict(self):
        names = _PARAMS[self.kind]
        return {"kind": self.kind, names[0]: self.params[0], names[1]: self.params[1]}

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        kind = d.pop("kind", None)
        if kind not in _PARAMS:
            raise ValueError(f"unknown distribution kind {kind!r}")
        names = _PARAMS[kind]
        if kind == "gumbel":
            d.setdefault("scale", 1.0)
        missing = [k for k in names if k not in d]
        extra = sorted(set(d) - set(names))
        if missing or extra:
            raise ValueError(
                f"{kind} expects fields {list(names)}; missing {missing}, unexpected {extra}"
            )
        return cls(kind, tuple(float(d[k]) for k in names))


def pdf(spec: DistributionSpec, x):
    """Probability density of ``spec`` at ``x`` (scalar or array)."""
    x = np.asarray(x, dtype=float)
    a, b = spec.params
    if spec.kind == "gumbel":
        z = (x - a) / b
        out = np.exp(-z - np.exp(-z)) / b
    elif spec.kind == "normal":
        z = (x - a) / b
        out = np.exp(-0.5 * z * z) / (b * math.sqrt(2 * math.pi))
    elif spec.kind == "lognormal":
        mu, s = spec.log_params
        with np.errstate(divide="ignore", invalid="ignore"):
            z = (np.log(x) - mu) / s
            out = np.where(x > 0, np.exp(-0.5 * z * z) / (x * s * math.sqrt(2 * math.pi)), 0.0)
    else:
        out = np.where((x >= a) & (x <= b), 1.0 / (b - a), 0.0)
    return out[()] if out.ndim == 0 else out


def cdf(spec: DistributionSpec, x):
    x = np.asarray(x, dtype=float)
    a, b = spec.params
    if spec.kind == "gumbel":
        out = np.exp(-np.exp(-(x - a) / b))
    elif spec.kind == "normal":
        out = special.ndtr((x - a) / b)
    elif spec.kind == "lognormal":
        mu, s = spec.log_params
        with np.errstate(divide="ignore"):
            out = np.where(x > 0, special.ndtr((np.log(np.maximum(x, 0)) - mu) / s), 0.0)
    else:
        out = np.clip((x - a) / (b - a), 0.0, 1.0)
    return out[()] if out.ndim == 0 else out


def quantile(spec: DistributionSpec, p):
    """Inverse of :func:`cdf`; ``p`` must lie strictly inside (0, 1)."""
    p = np.asarray(p, dtype=float)
    if np.any(~((p > 0) & (p < 1))):
        raise ValueError("quantile requires 0 < p < 1")
    a, b = spec.params
    if spec.kind == "gumbel":
        out = a - b * np.log(-np.log(p))
    elif spec.kind == "normal":
        out = a + b * special.ndtri(p)
    elif spec.kind == "lognormal":
        mu, s = spec.log_params
        out = np.exp(mu + s * special.ndtri(p))
    else:
        out = a + (b - a) * p
    return out[()] if out.ndim == 0 else out


def _splitmix64(x):
    x = (x + 0x9E3779B97F4A7C15) & 0xFFFFFFFFFFFFFFFF
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & 0xFFFFFFFFFFFFFFFF
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & 0xFFFFFFFFFFFFFFFF
    return x ^ (x >> 31)


@dataclass(frozen=True)
class RandomSource:
    """A reproducible random stream identified by ``(seed, stream_id)``.

    ``substream(j)`` derives an independent child stream, so work split into
    numbered blocks draws the same numbers whatever the schedule.
    """

    seed: int
    stream_id: int = 0

    def __post_init__(self):
        for name in ("seed", "stream_id"):
            v = getattr(self, name)
            if not isinstance(v, (int, np.integer)) or not 0 <= int(v) < 2**64:
                raise ValueError(f"{name} must be an integer in [0, 2**64)")

    def generator(self):
        ss = np.random.SeedSequence(int(self.seed), spawn_key=(int(self.stream_id),))
        return np.random.Generator(np.random.Philox(ss))

    def substream(self, j):
        return RandomSource(self.seed, _splitmix64(int(self.stream_id) ^ _splitmix64(int(j) + 1)))

    def split(self, k):
        return [self.substream(j) for j in range(k)]

    def uniform(self, n):
        """``n`` uniform draws on the open interval (0, 1)."""
        g = self.generator()
        return (g.integers(0, 1 << 53, size=n).astype(float) + 0.5) * 2.0**-53


def sample(spec: DistributionSpec, n: int, src: RandomSource, n_jobs: int = 1):
    """``n`` independent draws of ``spec`` by inverse transform.

    Draws are generated in fixed blocks of 65536, block ``j`` from
    ``src.substream(j)``; ``n_jobs`` only changes how blocks are scheduled.
    """
    if n < 1:
        raise ValueError("sample size must be >= 1")
    starts = list(range(0, n, _BLOCK))

    def block(j):
        m = min(_BLOCK, n - starts[j])
        return quantile(spec, src.substream(j).uniform(m))

    if n_jobs > 1 and len(starts) > 1:
        with ThreadPoolExecutor(n_jobs) as ex:
            parts = list(ex.map(block, range(len(starts))))
    else:
        parts = [block(j) for j in range(len(starts))]
    return np.atleast_1d(np.concatenate([np.atleast_1d(p) for p in parts]))


def integrate(f, lower, upper, rel_tol=1e-10, points=None, limit=500, abs_tol=0.0):
    """Adaptive Gauss-Kronrod quadrature of ``f`` over ``[lower, upper]``.

    Infinite limits are handled by QUADPACK's change of variables.  Raises
    :class:`IntegrationError` (with the best estimate attached) if neither
    the relative nor the absolute tolerance is met.
    """
    if rel_tol <= 0:
        raise ValueError("rel_tol must be > 0")
    kw = dict(epsabs=0.0, epsrel=rel_tol, limit=limit, full_output=1)
    if points is not None and math.isfinite(lower) and math.isfinite(upper):
        kw["points"] = points
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", _integrate.IntegrationWarning)
        res = _integrate.quad(f, lower, upper, **kw)
    val, err = res[0], res[1]
    ok = len(res) == 3 or res[3] is None
    tol_abs = max(rel_tol * abs(val), abs_tol)
    # QUADPACK occasionally flags roundoff while the bound is already met
    if not ok and err > max(tol_abs, 1e-300) * 10:
        raise IntegrationError(f"quadrature did not converge: {res[3]}", val, err)
    return val


def expect(spec: DistributionSpec, g=None, rel_tol=1e-10):
    """``E[g(X)]`` for ``X ~ spec`` by quadrature split at quantile points.

    Splitting keeps narrow densities far from the origin (large-mean
    lognormals, for instance) visible to the adaptive rule.
    """
    g = (lambda x: 1.0) if g is None else g
    lo, hi = spec.support
    qs = [quantile(spec, p) for p in (1e-14, 1e-6, 0.01, 0.25, 0.5, 0.75, 0.99, 1 - 1e-6, 1 - 1e-14)]
    edges = [lo] + [q for q in qs if lo < q < hi] + [hi]
    segs = [(a, b) for a, b in zip(edges[:-1], edges[1:]) if b > a]
    f = lambda x: g(x) * pdf(spec, x)
    # central segments first; their sum sets the absolute tolerance of the tails
    inner = [s for s in segs if math.isfinite(s[0]) and math.isfinite(s[1]) and s[0] >= qs[1] and s[1] <= qs[-2]]
    total = sum(integrate(f, a, b, rel_tol=rel_tol) for a, b in inner)
    floor = rel_tol * abs(total)
    for a, b in segs:
        if (a, b) not in inner:
            total += integrate(f, a, b, rel_tol=rel_tol, abs_tol=floor)
    return total
