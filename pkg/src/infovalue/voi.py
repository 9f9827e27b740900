"""Information value for discrete decisions, computed from sample tables.

All estimators post-process a :class:`~infovalue.model.SampleTable` whose
``utilities`` hold ``u(x_k, a)`` for every sample ``k`` and alternative
``a``.  Conditional expected utilities ``E[u(X, a) | X_v = x_v]`` come from a
smoother fitted per alternative; the smoother is then used either only to
pick the conditionally optimal alternative (``reoptimize``) or also to
value it (``plugin``).

Every estimate carries a Monte Carlo standard error computed from the
per-sample contributions.  Headline values are clipped at zero and reported
as exactly zero when below two standard errors; the raw mean is kept.
"""

from __future__ import annotations

import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .model import SampleTable, SchemaError
from .prob import RandomSource
from .smoothing import SmootherConfig, fit_many

__all__ = [
    "Estimate",
    "StateError",
    "UndefinedError",
    "FactorResult",
    "VoiReport",
    "conditional_expectations",
    "cvppi_profile",
    "evppi",
    "evpi",
    "evpm",
    "relative_iv",
    "decision_change_probability",
    "sample_information_value",
    "gumbel_location_sampler",
    "gumbel_sufficient_statistic",
    "sobol_first_order",
    "analyze_factor",
    "analyze",
]

MAX_GROUP = 2


class StateError(RuntimeError):
    """An operation was called on inputs in the wrong state."""


class UndefinedError(ArithmeticError):
    """An index is undefined for the given data (e.g. zero output variance)."""


@dataclass(frozen=True)
class Estimate:
    """A Monte Carlo estimate: headline ``value``, unclipped ``raw`` and ``se``."""

    value: float
    raw: float
    se: float
    extra: dict = field(default_factory=dict, compare=False)

    def __float__(self):
        return float(self.value)

    @classmethod
    def from_contributions(cls, c, clip=True, **extra):
        c = np.asarray(c, dtype=float)
        n = len(c)
        raw = float(c.mean())
        se = float(c.std(ddof=1) / math.sqrt(n)) if n > 1 else 0.0
        value = raw
        if clip:
            value = max(raw, 0.0)
            if abs(raw) < 2.0 * se:
                value = 0.0
        return cls(value, raw, se, dict(extra))

    def to_dict(self):
        return {"value": self.value, "raw": self.raw, "se": self.se}


def _names(factors):
    if isinstance(factors, str):
        return (factors,)
    names = tuple(factors)
    if not names:
        raise ValueError("empty factor set")
    return names


def _require_discrete(table):
    if table.utilities is None:
        raise SchemaError("discrete-decision estimators need per-decision utility columns u_a<k>")


def _check_group(table, names):
    if len(names) > MAX_GROUP:
        raise ValueError(f"groups of more than {MAX_GROUP} factors are not supported (got {len(names)})")
    unknown = [v for v in names if v not in table.factors]
    if unknown:
        raise KeyError(f"unknown factor(s) {unknown}")


def prior_optimum_index(table):
    _require_discrete(table)
    return int(np.argmax(table.utilities.mean(axis=0)))


def conditional_expectations(table: SampleTable, factors, smoother: SmootherConfig | None = None):
    """Smoothed ``E[u(X, a) | X_v]`` at every sample, shape ``(n, n_a)``.

    Returns the matrix and the fitted smoothers (one per alternative).
    """
    _require_discrete(table)
    names = _names(factors)
    _check_group(table, names)
    x = table.conditioning(names)
    sm = fit_many(x, table.utilities, smoother)
    S = np.column_stack([s(x) for s in sm])
    return S, sm


def cvppi_profile(smoothers, a_opt):
    """``x_v -> max_a S(x_v, a) - S(x_v, a_opt)`` from per-alternative smoothers."""
    if a_opt is None:
        raise StateError("the prior optimum must be computed before the CVPPI")
    smoothers = list(smoothers)

    def profile(x):
        S = np.column_stack([s(x) for s in smoothers])
        return S.max(axis=1) - S[:, a_opt]

    return profile


def _evppi_from_S(U, S, a_opt, estimator):
    if estimator == "plugin":
        return Estimate.from_contributions(S.max(axis=1) - S[:, a_opt], estimator="plugin")
    if estimator == "reoptimize":
        a = np.argmax(S, axis=1)
        rows = np.arange(len(a))
        return Estimate.from_contributions(U[rows, a] - U[:, a_opt], estimator="reoptimize")
    raise ValueError(f"unknown estimator {estimator!r}; use 'plugin' or 'reoptimize'")


def evppi(table: SampleTable, factors, estimator="reoptimize", smoother: SmootherConfig | None = None, S=None):
    """Information value of a factor or a group of at most two factors."""
    _require_discrete(table)
    if S is None:
        S, _ = conditional_expectations(table, factors, smoother)
    return _evppi_from_S(table.utilities, S, prior_optimum_index(table), estimator)


def evpi(table: SampleTable):
    """Value of deciding with every sampled input known."""
    _require_discrete(table)
    U = table.utilities
    a_opt = prior_optimum_index(table)
    return Estimate.from_contributions(U.max(axis=1) - U[:, a_opt])


def evpm(table: SampleTable):
    """Value of the perfect model: EVPI of the aleatory-reduced table."""
    if not table.aleatory_reduced:
        raise StateError("EVPM needs utilities averaged over the aleatory factors; this table samples them")
    return evpi(table)


def relative_iv(V, normalizer):
    """``V / normalizer``; ``None`` when the normalizer is indistinguishable from zero."""
    v = float(V)
    if isinstance(normalizer, Estimate):
        nv, floor = normalizer.value, 2.0 * normalizer.se
    else:
        nv, floor = float(normalizer), 0.0
    if not nv > floor or nv <= 0:
        return None
    return v / nv


def decision_change_probability(table: SampleTable, factors, smoother: SmootherConfig | None = None, S=None):
    """Fraction of samples whose smoothed conditional optimum differs from the prior one."""
    if table.utilities is None:
        raise SchemaError("the decision-change probability is defined for discrete decisions only")
    if S is None:
        S, _ = conditional_expectations(table, factors, smoother)
    changed = np.argmax(S, axis=1) != prior_optimum_index(table)
    return Estimate.from_contributions(changed.astype(float), clip=False)


# -- sample information ----------------------------------------------------

_ROW_BLOCK = 4096


def gumbel_location_sampler(loc, n_s, src: RandomSource):
    """``(len(loc), n_s)`` Gumbel(loc, 1) observations, column ``c`` from substream ``c``.

    Column-wise streams make the data for ``n_s`` a prefix of the data for
    any larger ``n_s``.
    """
    loc = np.asarray(loc, dtype=float)
    out = np.empty((len(loc), n_s))
    for c in range(n_s):
        u = src.substream(c).uniform(len(loc))
        out[:, c] = loc - np.log(-np.log(u))
    return out


def gumbel_sufficient_statistic(data):
    """``sum_i exp(-s_i)``, sufficient for the location of unit-scale Gumbel data."""
    return np.exp(-np.asarray(data)).sum(axis=1)


def sample_information_value(
    table: SampleTable,
    factor: str,
    n_s: int,
    sampler: Callable = gumbel_location_sampler,
    statistic: Callable = gumbel_sufficient_statistic,
    src: RandomSource | None = None,
    smoother: SmootherConfig | None = None,
    estimator="reoptimize",
    transform: Callable | None = None,
):
    """Value of observing ``n_s`` data points whose law depends on ``factor``.

    For every row, data are drawn from ``sampler(x_factor, n_s, src)`` and
    reduced with ``statistic``; the information value of the resulting
    scalar is then estimated like any other factor.  ``transform`` (for
    instance ``np.log`` for a positive statistic) is applied before smoothing;
    a strictly monotone transform does not change the target quantity, only
    how evenly the smoother's anchors are spread.
    """
    _require_discrete(table)
    if n_s < 0:
        raise ValueError("n_s must be >= 0")
    if n_s == 0:
        return Estimate(0.0, 0.0, 0.0, {"n_s": 0})
    if src is None:
        raise ValueError("a RandomSource is required to simulate data")
    x = table.factors[factor]
    z = np.empty(len(x))
    for b, start in enumerate(range(0, len(x), _ROW_BLOCK)):
        sl = slice(start, start + _ROW_BLOCK)
        z[sl] = statistic(sampler(x[sl], n_s, src.substream(b)))
    if transform is not None:
        z = transform(z)
    if not np.all(np.isfinite(z)):
        raise ArithmeticError("data statistic produced non-finite values")
    S = np.column_stack([s(z) for s in fit_many(z, table.utilities, smoother)])
    est = _evppi_from_S(table.utilities, S, prior_optimum_index(table), estimator)
    return Estimate(est.value, est.raw, est.se, dict(est.extra, n_s=n_s))


# -- Sobol' ------------------------------------------------------------------


def _sobol_from_fit(g, y, n_boot=100, seed=0):
    vy = y.var()
    if not vy > 0:
        raise UndefinedError("output has zero variance")
    raw = float(g.var() / vy)
    rng = np.random.default_rng(seed)
    n = len(y)
    boot = np.empty(n_boot)
    for b in range(n_boot):
        i = rng.integers(0, n, n)
        boot[b] = g[i].var() / y[i].var()
    return Estimate(float(np.clip(raw, 0.0, 1.0)), raw, float(boot.std(ddof=1)))


def sobol_first_order(table: SampleTable, factor, output=None, smoother: SmootherConfig | None = None):
    """First-order Sobol' index ``Var[E[y | x_i]] / Var[y]`` by smoothing.

    ``output`` is a column name, an array, or ``None`` for the utility at
    the prior optimum.  The standard error is a bootstrap over rows with
    the smoother held fixed.
    """
    names = _names(factor)
    _check_group(table, names)
    if output is None:
        _require_discrete(table)
        y = table.utilities[:, prior_optimum_index(table)]
    elif isinstance(output, str):
        y = table.column(output)
    else:
        y = np.asarray(output, dtype=float)
    if not y.var() > 0:
        raise UndefinedError("output has zero variance")
    x = table.conditioning(names)
    g = fit_many(x, y, smoother)[0](x)
    return _sobol_from_fit(g, y)


# -- reports ---------------------------------------------------------------


@dataclass
class FactorResult:
    name: str
    factors: tuple[str, ...]
    V: Estimate
    V_plugin: Estimate | None = None
    relative_V: float | None = None
    DC: Estimate | None = None
    sobol_first: Estimate | None = None

    def to_dict(self):
        est = lambda e: None if e is None else e.value
        se = lambda e: None if e is None else e.se
        raw = lambda e: None if e is None else e.raw
        return {
            "name": self.name,
            "factors": list(self.factors),
            "V": self.V.value,
            "V_se": self.V.se,
            "V_raw": self.V.raw,
            "V_plugin": est(self.V_plugin),
            "V_plugin_se": se(self.V_plugin),
            "relative_V": self.relative_V,
            "DC": est(self.DC),
            "DC_se": se(self.DC),
            "sobol_first": est(self.sobol_first),
            "sobol_first_se": se(self.sobol_first),
            "sobol_first_raw": raw(self.sobol_first),
        }


@dataclass
class VoiReport:
    """Sensitivity indices, normalizers and diagnostics for one problem."""

    factors: list[FactorResult]
    a_opt: object
    expected_utilities: list[float] | None
    evpi: Estimate | None
    evpm: Estimate | None
    normalizer: str = "evpm"
    decisions: list[str] | None = None
    sample_information: list[dict] = field(default_factory=list)
    diagnostics: dict = field(default_factory=dict)
    config_echo: dict = field(default_factory=dict)

    def factor(self, name):
        for f in self.factors:
            if f.name == name:
                return f
        raise KeyError(name)

    def to_dict(self):
        opt = lambda e: None if e is None else e.value
        return {
            "factors": [f.to_dict() for f in self.factors],
            "a_opt": self.a_opt,
            "decisions": self.decisions,
            "expected_utilities": self.expected_utilities,
            "evpi": opt(self.evpi),
            "evpi_se": None if self.evpi is None else self.evpi.se,
            "evpm": opt(self.evpm),
            "evpm_se": None if self.evpm is None else self.evpm.se,
            "normalizer": self.normalizer,
            "sample_information": self.sample_information,
            "diagnostics": self.diagnostics,
            "config_echo": self.config_echo,
        }

    def to_json(self):
        return json.dumps(_jsonable(self.to_dict()), indent=2, sort_keys=True) + "\n"


def _jsonable(v):
    if isinstance(v, dict):
        return {str(k): _jsonable(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    if isinstance(v, (np.floating, float)):
        v = float(v)
        return v if math.isfinite(v) else None
    if isinstance(v, np.integer):
        return int(v)
    return v


def group_name(names):
    return "+".join(names)


def analyze_factor(table: SampleTable, factors, smoother: SmootherConfig | None = None, estimator="reoptimize",
                   normalizer: Estimate | None = None, sobol=True):
    """All discrete-decision indices for one factor or group from one smoother fit."""
    names = _names(factors)
    S, _ = conditional_expectations(table, names, smoother)
    U = table.utilities
    a_opt = prior_optimum_index(table)
    V = _evppi_from_S(U, S, a_opt, estimator)
    other = "plugin" if estimator == "reoptimize" else "reoptimize"
    V_alt = _evppi_from_S(U, S, a_opt, other)
    dc = decision_change_probability(table, names, S=S)
    sob = None
    if sobol:
        try:
            sob = _sobol_from_fit(S[:, a_opt], U[:, a_opt])
        except UndefinedError:
            sob = None
    rel = relative_iv(V, normalizer) if normalizer is not None else None
    return FactorResult(group_name(names), names, V, V_alt if estimator == "reoptimize" else V, rel, dc, sob)


def analyze(
    table: SampleTable,
    factors: Sequence[str] | str = "all",
    groups: Sequence[Sequence[str]] = (),
    estimator="reoptimize",
    smoother: SmootherConfig | None = None,
    normalizer="evpm",
    sobol=True,
    n_jobs: int = 1,
):
    """Information value, decision-change probability and Sobol' index per factor.

    ``normalizer`` selects the EVPM (aleatory-reduced tables) or EVPI for
    relative information values.  Factor analyses run on ``n_jobs`` threads;
    results do not depend on the thread count.
    """
    _require_discrete(table)
    smoother = smoother or SmootherConfig()
    names = table.factor_names if factors == "all" else list(_names(factors))
    unknown = [v for v in names if v not in table.factors]
    if unknown:
        raise KeyError(f"unknown factor(s) {unknown}")
    requests = [(v,) for v in names] + [tuple(g) for g in groups]
    for g in requests:
        _check_group(table, g)
    if normalizer not in ("evpi", "evpm"):
        raise ValueError("normalizer must be 'evpi' or 'evpm'")
    e_pi = evpi(table)
    e_pm = evpm(table) if table.aleatory_reduced else None
    norm = e_pm if normalizer == "evpm" else e_pi
    if norm is None:
        raise StateError("EVPM normalization needs an aleatory-reduced table; use normalizer='evpi'")

    def run(g):
        return analyze_factor(table, g, smoother, estimator, norm, sobol)

    if n_jobs > 1:
        with ThreadPoolExecutor(n_jobs) as ex:
            results = list(ex.map(run, requests))
    else:
        results = [run(g) for g in requests]
    eu = table.utilities.mean(axis=0)
    a_opt = int(np.argmax(eu))
    return VoiReport(
        factors=results,
        a_opt=table.decisions[a_opt],
        expected_utilities=[float(v) for v in eu],
        evpi=e_pi,
        evpm=e_pm,
        normalizer=normalizer,
        decisions=list(table.decisions),
        diagnostics={
            "n": table.n,
            "estimator": estimator,
            "smoother": smoother.to_dict(),
            "aleatory_reduced": table.aleatory_reduced,
            "a_opt_index": a_opt,
        },
    )
