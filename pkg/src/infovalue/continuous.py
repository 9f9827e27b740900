"""Information value when the decision is a real number.

The decision is treated as an extra random input drawn uniformly over its
bounds; a 2-d smoother of utility on ``(x_v, a)`` then estimates the
conditional expected utility surface.  Its profile in ``a`` is maximized at
equal-probability knots of ``x_v`` (coarse grid, then golden section) and the
knot optima are interpolated monotone-cubically into a map ``x_v -> a``.

Quadratic and LINEX utilities have closed-form conditional optima, so they
only need a 1-d smoother of ``Y`` (or of ``exp(gamma Y)``).
"""

from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass, replace

import numpy as np
from scipy.interpolate import PchipInterpolator

from .model import LinexUtility, QuadraticUtility, SampleTable, SchemaError, WorkingExampleContinuous
from .prob import RandomSource
from .smoothing import SmootherConfig, fit, fit_many
from .voi import Estimate, FactorResult, StateError, VoiReport, _check_group, _names, relative_iv, sobol_first_order

__all__ = [
    "AugmentedTable",
    "OptimalDecisionMap",
    "augment",
    "maximize_profiles",
    "conditional_optimum",
    "evppi_continuous",
    "prior_optimum_continuous",
    "evpi_continuous",
    "evpm_continuous",
    "write_map_csv",
    "analyze_continuous",
    "MODES",
]

MODES = ("smoothed_profile", "closed_form_quadratic", "closed_form_linex")
N_GRID = 64
REL_TOL = 1e-4
# The decision surface gets its own loess span: wider neighbourhoods flatten
# the profile in ``a`` and bias the conditional optimum toward ``a_opt``.
SURFACE_SPAN = 0.1
MIN_SPAN = 0.1
_INVPHI = (math.sqrt(5.0) - 1.0) / 2.0


@dataclass
class AugmentedTable:
    """A sample table with one uniformly drawn decision per row and its utility."""

    table: SampleTable
    a: np.ndarray
    u: np.ndarray
    bounds: tuple[float, float]

    @property
    def n(self):
        return len(self.a)


def _check_bounds(bounds):
    lo, hi = (float(b) for b in bounds)
    if not (math.isfinite(lo) and math.isfinite(hi) and lo < hi):
        raise ValueError(f"decision bounds must be finite with lower < upper, got {bounds}")
    return lo, hi


def augment(table: SampleTable, bounds, src: RandomSource):
    """Draw ``a ~ U[bounds]`` independently per row and evaluate ``u(x, a)``."""
    lo, hi = _check_bounds(bounds)
    if table.utility_fn is None:
        raise SchemaError("augmentation needs a table that can evaluate utilities at arbitrary decisions")
    a = lo + (hi - lo) * src.uniform(table.n)
    u = np.asarray(table.utility_fn(a), dtype=float)
    if u.shape != (table.n,) or not np.all(np.isfinite(u)):
        raise ArithmeticError("utility evaluation at the sampled decisions failed")
    return AugmentedTable(table, a, u, (lo, hi))


# -- profile optimization -------------------------------------------------


def maximize_profiles(f, lo, hi, m, n_grid=N_GRID, rel_tol=REL_TOL):
    """Maximize ``m`` profiles over ``[lo, hi]`` at once.

    ``f(j, a)`` evaluates profile ``j`` (integer array) at decisions ``a``
    (same shape).  A grid scan locates the best cell, then golden section
    refines within its neighbours until the bracket is below
    ``rel_tol * (hi - lo)``.  Returns the maximizers and the maxima.
    """
    grid = np.linspace(lo, hi, n_grid)
    jj = np.repeat(np.arange(m), n_grid)
    vals = np.asarray(f(jj, np.tile(grid, m))).reshape(m, n_grid)
    best = np.argmax(vals, axis=1)
    a = grid[np.clip(best - 1, 0, n_grid - 1)]
    b = grid[np.clip(best + 1, 0, n_grid - 1)]
    idx = np.arange(m)
    c = b - _INVPHI * (b - a)
    d = a + _INVPHI * (b - a)
    fc, fd = f(idx, c), f(idx, d)
    tol = rel_tol * (hi - lo)
    while np.any(b - a > tol):
        left = fc >= fd
        # keep [a, d] where the left interior point is better
        b = np.where(left, d, b)
        a = np.where(left, a, c)
        new_c = b - _INVPHI * (b - a)
        new_d = a + _INVPHI * (b - a)
        c_next = np.where(left, new_c, d)
        d_next = np.where(left, c, new_d)
        fresh = np.where(left, c_next, d_next)
        ff = f(idx, fresh)
        fc, fd = np.where(left, ff, fd), np.where(left, fc, ff)
        c, d = c_next, d_next
    x = 0.5 * (a + b)
    fx = f(idx, x)
    # the grid maximum can beat the bracket midpoint on flat or kinked profiles
    gbest = vals[idx, best]
    use_grid = gbest > fx
    return np.where(use_grid, grid[best], x), np.where(use_grid, gbest, fx)


@dataclass
class OptimalDecisionMap:
    """Interpolated conditional optimum ``x_v -> a``, clipped to the bounds."""

    factor: str
    knots: np.ndarray
    values: np.ndarray
    bounds: tuple[float, float]
    at_bounds: int = 0

    def __post_init__(self):
        self.knots = np.asarray(self.knots, dtype=float)
        self.values = np.asarray(self.values, dtype=float)
        self._interp = PchipInterpolator(self.knots, self.values) if len(self.knots) > 1 else None

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        if self._interp is None:
            out = np.full(x.shape, self.values[0])
        else:
            out = self._interp(np.clip(x, self.knots[0], self.knots[-1]))
        return np.clip(out, *self.bounds)


def _surface_config(cfg):
    cfg = cfg or SmootherConfig(span=SURFACE_SPAN)
    if cfg.method == "loess":
        cfg = replace(cfg, span=max(cfg.span, MIN_SPAN), degree=2)
    return cfg


def _knots(x, n_knots):
    q = np.quantile(x, (np.arange(n_knots) + 0.5) / n_knots)
    return np.unique(q)


def conditional_optimum(aug: AugmentedTable, factor: str, cfg: SmootherConfig | None = None, n_knots=50):
    """Conditionally optimal decision as a function of one factor.

    ``cfg`` configures the 2-d smoother of utility on ``(x, a)``; loess is
    forced to degree 2 with span at least ``MIN_SPAN``.
    """
    if n_knots < 1:
        raise ValueError("n_knots must be >= 1")
    x = aug.table.column(factor)
    s = fit(np.column_stack([x, aug.a]), aug.u, _surface_config(cfg))
    knots = _knots(x, n_knots)
    lo, hi = aug.bounds
    opt, _ = maximize_profiles(lambda j, a: s(np.column_stack([knots[j], a])), lo, hi, len(knots))
    edge = REL_TOL * (hi - lo) * 10
    at_bounds = int(np.sum((opt <= lo + edge) | (opt >= hi - edge)))
    if at_bounds > 0.05 * len(knots):
        warnings.warn(
            f"conditional optimum for {factor} hits the decision bounds at {at_bounds} of {len(knots)} knots;"
            " the bounds are probably too tight",
            RuntimeWarning,
            stacklevel=2,
        )
    return OptimalDecisionMap(factor, knots, opt, (lo, hi), at_bounds)


# -- prior optimum ---------------------------------------------------------


def _utility_model(table):
    return None if table.problem is None else table.problem.utility


def _outcome(table, model):
    try:
        return table.column(model.outcome)
    except KeyError:
        raise SchemaError(f"missing outcome column {model.outcome!r}") from None


def _log_mean_exp(v):
    top = v.max()
    return top + math.log(np.mean(np.exp(v - top)))


def prior_optimum_continuous(table_or_aug, bounds=None, cfg: SmootherConfig | None = None):
    """Best decision without further information and its expected utility.

    Quadratic utility gives the mean of ``Y``, LINEX the stabilized
    ``(1/gamma) ln mean exp(gamma Y)``; otherwise the Monte Carlo mean
    utility profile (or, for an augmented table without a utility function,
    a 1-d smoother of utility on ``a``) is maximized numerically.
    """
    if isinstance(table_or_aug, AugmentedTable):
        aug, table = table_or_aug, table_or_aug.table
        bounds = bounds or aug.bounds
    else:
        aug, table = None, table_or_aug
    model = _utility_model(table)
    if isinstance(model, QuadraticUtility):
        a = float(np.mean(_outcome(table, model)))
    elif isinstance(model, LinexUtility):
        a = _log_mean_exp(model.gamma * _outcome(table, model)) / model.gamma
    else:
        if bounds is None:
            raise ValueError("decision bounds are required")
        lo, hi = _check_bounds(bounds)
        if table.utility_fn is not None:
            f = lambda j, a: np.array([table.utility_at(v).mean() for v in np.atleast_1d(a)])
        elif aug is not None:
            s = fit(aug.a, aug.u, cfg)
            f = lambda j, a: s(np.atleast_1d(a))
        else:
            raise StateError("no way to evaluate the utility profile; augment the table first")
        a, _ = maximize_profiles(f, lo, hi, 1)
        a = float(a[0])
        if min(a - lo, hi - a) <= REL_TOL * (hi - lo) * 10:
            warnings.warn(f"prior optimum {a:.6g} is at a decision bound", RuntimeWarning, stacklevel=2)
    eu = float(table.utility_at(a).mean()) if table.utility_fn is not None else None
    return a, eu


# -- information values ----------------------------------------------------


def _value(table, a_cond, a_opt, utility_fn=None):
    f = utility_fn or table.utility_at
    return Estimate.from_contributions(f(a_cond) - f(a_opt))


def evppi_continuous(
    table,
    factors,
    mode="smoothed_profile",
    cfg: SmootherConfig | None = None,
    src: RandomSource | None = None,
    bounds=None,
    n_knots=50,
    estimator="reoptimize",
    a_opt=None,
    surface: SmootherConfig | None = None,
):
    """Information value of one factor (or a pair, closed forms only).

    ``smoothed_profile`` accepts an :class:`AugmentedTable` or a plain table
    plus ``bounds`` and ``src`` for augmentation.  With ``reoptimize`` the
    map's decision is valued with the exact per-sample utility; ``plugin``
    values it with the smoothed surface instead.  ``cfg`` is the 1-d
    smoother of the closed forms, ``surface`` the 2-d smoother on ``(x, a)``.
    """
    if mode not in MODES:
        raise ValueError(f"unknown mode {mode!r}; choose from {MODES}")
    table_or_aug = table
    if isinstance(table, AugmentedTable):
        table = table.table
    names = _names(factors)
    _check_group(table, names)
    model = _utility_model(table)
    if mode == "closed_form_quadratic":
        if not isinstance(model, QuadraticUtility):
            raise SchemaError("closed_form_quadratic needs a quadratic utility on an outcome column")
        y = _outcome(table, model)
        a_hat = fit_many(table.conditioning(names), y, cfg)[0](table.conditioning(names))
        a0 = float(np.mean(y)) if a_opt is None else a_opt
        est = _value(table, a_hat, a0)
        return Estimate(est.value, est.raw, est.se, {"a_opt": a0, "mode": mode})
    if mode == "closed_form_linex":
        if not isinstance(model, LinexUtility):
            raise SchemaError("closed_form_linex needs a LINEX utility on an outcome column")
        g = model.gamma
        y = _outcome(table, model)
        top = y.max()
        e = np.exp(g * (y - top))
        x = table.conditioning(names)
        s = fit_many(x, e, cfg)[0](x)
        a_hat = top + np.log(np.maximum(s, np.finfo(float).tiny)) / g
        a0 = top + math.log(e.mean()) / g if a_opt is None else a_opt
        est = _value(table, a_hat, a0)
        return Estimate(est.value, est.raw, est.se, {"a_opt": a0, "mode": mode})
    if len(names) != 1:
        raise ValueError("smoothed_profile supports a single factor (the surface is 2-d in (x, a))")
    if isinstance(table_or_aug, AugmentedTable):
        aug = table_or_aug
    else:
        if bounds is None or src is None:
            raise ValueError("smoothed_profile on a plain table needs bounds and a RandomSource")
        aug = augment(table, bounds, src)
    if a_opt is None:
        a_opt, _ = prior_optimum_continuous(aug, cfg=cfg)
    dmap = conditional_optimum(aug, names[0], surface, n_knots)
    x = table.column(names[0])
    a_hat = dmap(x)
    if estimator == "reoptimize":
        if table.utility_fn is None:
            raise StateError("re-optimization needs per-sample utilities; use estimator='plugin'")
        est = _value(table, a_hat, a_opt)
    elif estimator == "plugin":
        s = fit(np.column_stack([x, aug.a]), aug.u, _surface_config(surface))
        est = Estimate.from_contributions(
            s(np.column_stack([x, a_hat])) - s(np.column_stack([x, np.full_like(x, a_opt)]))
        )
    else:
        raise ValueError(f"unknown estimator {estimator!r}")
    return Estimate(est.value, est.raw, est.se,
                    {"a_opt": a_opt, "mode": mode, "map": dmap, "knots_at_bounds": dmap.at_bounds})


def _deterministic_optimum(table):
    model = _utility_model(table)
    if isinstance(model, (QuadraticUtility, LinexUtility)):
        return model.optimum(_outcome(table, model))
    if isinstance(model, WorkingExampleContinuous):
        if table.aleatory_reduced:
            return model.optimum_given_epistemic(table.factors)
        return model.optimum_given_all(table.factors, table.factors["S"])
    raise SchemaError("no per-sample optimum is known for this utility model")


def _perfect_info(table, a_det, a_opt):
    ok = np.isfinite(a_det)
    excluded = int(np.sum(~ok))
    if not ok.any():
        raise ArithmeticError("per-sample optimum undefined for every sample")
    gain = table.utility_at(np.where(ok, a_det, a_opt)) - table.utility_at(a_opt)
    est = Estimate.from_contributions(gain[ok])
    return Estimate(est.value, est.raw, est.se, {"a_opt": a_opt, "excluded": excluded})


def evpi_continuous(table: SampleTable, bounds=None, a_opt=None):
    """Value of deciding with every sampled input known.

    Samples whose deterministic optimum is undefined are excluded and
    counted in ``extra["excluded"]``.
    """
    if a_opt is None:
        a_opt, _ = prior_optimum_continuous(table, bounds)
    return _perfect_info(table, _deterministic_optimum(table), a_opt)


def evpm_continuous(problem, table: SampleTable, bounds=None, a_opt=None):
    """Value of the perfect model: aleatory factors stay uncertain.

    A full table (with the sampled load ``S``) is first reduced to expected
    utilities over the load using the problem's model.
    """
    model = problem.utility
    if not table.aleatory_reduced:
        if not isinstance(model, WorkingExampleContinuous):
            raise StateError("EVPM needs an aleatory-reduced table for this utility model")
        x = {k: v for k, v in table.factors.items() if k != "S"}
        table = SampleTable(x, utility_fn=lambda a: model.utility(x, a), problem=problem)
    if isinstance(model, (QuadraticUtility, LinexUtility)) and not problem.aleatory:
        return evpi_continuous(table, bounds, a_opt)
    if a_opt is None:
        a_opt, _ = prior_optimum_continuous(table, bounds or problem.decisions.bounds)
    return _perfect_info(table, _deterministic_optimum(table), a_opt)


def write_map_csv(dmap: OptimalDecisionMap, path, units=("", "")):
    """Write the map's knots as ``x_knot, a_opt`` rows with a units row."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow([f"{dmap.factor}_knot", "a_opt"])
        w.writerow(list(units))
        for x, a in zip(dmap.knots, dmap.values):
            w.writerow([repr(float(x)), repr(float(a))])


def _default_mode(table):
    model = _utility_model(table)
    if isinstance(model, QuadraticUtility):
        return "closed_form_quadratic"
    if isinstance(model, LinexUtility):
        return "closed_form_linex"
    return "smoothed_profile"


def analyze_continuous(
    table: SampleTable,
    factors="all",
    bounds=None,
    src: RandomSource | None = None,
    smoother: SmootherConfig | None = None,
    estimator="reoptimize",
    normalizer="evpm",
    mode=None,
    sobol=True,
    n_knots=50,
    surface: SmootherConfig | None = None,
):
    """Information value and Sobol' index per factor for a continuous decision."""
    smoother = smoother or SmootherConfig()
    mode = mode or _default_mode(table)
    problem = table.problem
    if bounds is None and problem is not None:
        bounds = problem.decisions.bounds
    names = table.factor_names if factors == "all" else list(_names(factors))
    for v in names:
        _check_group(table, (v,))
    if normalizer not in ("evpi", "evpm"):
        raise ValueError("normalizer must be 'evpi' or 'evpm'")
    aug = None
    if mode == "smoothed_profile":
        if bounds is None:
            raise ValueError("decision bounds are required for the smoothed profile")
        aug = augment(table, bounds, src or RandomSource(0, 1))
    a_opt, eu = prior_optimum_continuous(table, bounds, smoother)
    e_pi = evpi_continuous(table, bounds, a_opt)
    e_pm = None
    if problem is not None and (table.aleatory_reduced or isinstance(problem.utility, WorkingExampleContinuous)):
        e_pm = evpm_continuous(problem, table, bounds, a_opt)
    norm = e_pm if normalizer == "evpm" else e_pi
    if norm is None:
        raise StateError("EVPM normalization is unavailable for this problem; use normalizer='evpi'")
    y = table.utility_at(a_opt)
    results, maps = [], {}
    for v in names:
        V = evppi_continuous(aug if aug is not None else table, v, mode, smoother,
                             n_knots=n_knots, estimator=estimator, a_opt=a_opt, surface=surface)
        if "map" in V.extra:
            maps[v] = V.extra["map"]
        sob = None
        if sobol:
            try:
                sob = sobol_first_order(table, v, output=y, smoother=smoother)
            except ArithmeticError:
                sob = None
        results.append(FactorResult(v, (v,), V, None, relative_iv(V, norm), None, sob))
    rep = VoiReport(
        factors=results,
        a_opt=float(a_opt),
        expected_utilities=[eu] if eu is not None else None,
        evpi=e_pi,
        evpm=e_pm,
        normalizer=normalizer,
        diagnostics={
            "n": table.n,
            "estimator": estimator,
            "mode": mode,
            "smoother": smoother.to_dict(),
            "surface_smoother": _surface_config(surface).to_dict() if mode == "smoothed_profile" else None,
            "bounds": None if bounds is None else [float(b) for b in bounds],
            "evpi_excluded": e_pi.extra.get("excluded", 0),
            "evpm_excluded": None if e_pm is None else e_pm.extra.get("excluded", 0),
            "knots_at_bounds": {v: m.at_bounds for v, m in maps.items()},
        },
    )
    rep.maps = maps
    return rep
