"""Information value when the outcome is a rare failure event.

Utility depends on the decision and on whether the failure ``F`` occurs, so
the conditional expected utility is a two-term mixture in
``Pr(F | X_i = x, a)``.  That probability is estimated from samples of ``X``
drawn conditional on ``F`` (as produced by importance sampling or subset
simulation) through Bayes' rule::

    Pr(F | x) = p_F * f_{X_i | F}(x) / f_{X_i}(x)

with a Gaussian kernel density estimate of ``f_{X_i | F}`` and the known
prior marginal ``f_{X_i}``.  No further model runs are needed.
"""

from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .model import SchemaError
from .prob import DistributionSpec, RandomSource, pdf, sample
from .smoothing import silverman_bandwidth
from .voi import Estimate

__all__ = [
    "RareEventProblem",
    "FailureDensity",
    "expected_utility_rare",
    "conditional_failure_probability",
    "evppi_rare",
    "read_failure_csv",
    "MIN_FAILURE_SAMPLES",
]

MIN_FAILURE_SAMPLES = 200
_GRID = 8192
_CUT = 8.0


class FailureDensity:
    """Gaussian KDE (Silverman bandwidth) of one coordinate of the failure samples.

    The estimate is computed exactly on a fine grid spanning the samples
    plus eight bandwidths on each side and interpolated linearly; it is zero
    beyond the grid, where every kernel has decayed below ``exp(-32)``.
    """

    def __init__(self, samples, bandwidth=None):
        s = np.sort(np.asarray(samples, dtype=float))
        if s.ndim != 1 or len(s) == 0:
            raise SchemaError("failure sample set is empty")
        if not np.all(np.isfinite(s)):
            raise SchemaError("failure samples contain non-finite values")
        h = silverman_bandwidth(s) if bandwidth is None else float(bandwidth)
        if not h > 0:
            # all samples equal: fall back to a width tied to their magnitude
            h = max(abs(s[0]), 1.0) * 1e-3
        self.h = h
        self.n = len(s)
        self.grid = np.linspace(s[0] - _CUT * h, s[-1] + _CUT * h, _GRID)
        vals = np.empty(_GRID)
        norm = 1.0 / (self.n * h * math.sqrt(2 * math.pi))
        step = max(1, 2**22 // self.n)
        for i in range(0, _GRID, step):
            g = self.grid[i:i + step, None]
            lo, hi = np.searchsorted(s, [g[0, 0] - _CUT * h, g[-1, 0] + _CUT * h])
            z = (g - s[None, lo:hi]) / h
            vals[i:i + step] = np.exp(-0.5 * z * z).sum(axis=1) * norm
        self.values = vals

    def __call__(self, x):
        return np.interp(x, self.grid, self.values, left=0.0, right=0.0)


def expected_utility_rare(p_f_cond, u_fail, u_safe):
    """``u_fail * p + u_safe * (1 - p)`` for a conditional failure probability ``p``."""
    p = np.asarray(p_f_cond, dtype=float)
    if np.any((p < 0) | (p > 1)):
        raise ValueError("failure probability must lie in [0, 1]")
    out = np.asarray(u_fail) * p + np.asarray(u_safe) * (1.0 - p)
    return out[()] if np.ndim(out) == 0 else out


@dataclass
class RareEventProblem:
    """Failure samples, prior marginals and failure/survival utilities per decision.

    ``failure_samples[k][name]`` holds the failure samples of factor
    ``name`` under decision ``k``; ``p_f[k]`` is that decision's prior
    failure probability.
    """

    p_f: Sequence[float]
    failure_samples: Sequence[Mapping[str, np.ndarray]]
    priors: Mapping[str, DistributionSpec]
    u_fail: Sequence[float]
    u_safe: Sequence[float]
    decisions: tuple[str, ...] = ()
    _densities: dict = field(default_factory=dict, init=False, repr=False)

    def __post_init__(self):
        self.p_f = [float(p) for p in self.p_f]
        self.u_fail = [float(v) for v in self.u_fail]
        self.u_safe = [float(v) for v in self.u_safe]
        n_a = len(self.p_f)
        if n_a == 0:
            raise SchemaError("at least one decision is required")
        for p in self.p_f:
            if not 0.0 < p < 1.0:
                raise SchemaError(f"prior failure probability must lie in (0, 1), got {p}")
        if len(self.u_fail) != n_a or len(self.u_safe) != n_a:
            raise SchemaError("u_fail and u_safe need one entry per decision")
        if len(self.failure_samples) != n_a:
            raise SchemaError(f"failure samples given for {len(self.failure_samples)} of {n_a} decisions")
        self.failure_samples = [{k: np.asarray(v, dtype=float) for k, v in fs.items()} for fs in self.failure_samples]
        for k, fs in enumerate(self.failure_samples):
            if not fs or min(len(v) for v in fs.values()) == 0:
                raise SchemaError(f"no failure samples for decision {k + 1}")
        if not self.decisions:
            self.decisions = tuple(str(k + 1) for k in range(n_a))

    @property
    def n_decisions(self):
        return len(self.p_f)

    def density(self, factor, decision):
        key = (factor, decision)
        if key not in self._densities:
            fs = self.failure_samples[decision]
            if factor not in fs:
                raise SchemaError(f"no failure samples of {factor!r} for decision {decision + 1}")
            if len(fs[factor]) < MIN_FAILURE_SAMPLES:
                warnings.warn(
                    f"only {len(fs[factor])} failure samples for decision {decision + 1};"
                    f" conditional probabilities are unreliable below {MIN_FAILURE_SAMPLES}",
                    RuntimeWarning,
                    stacklevel=3,
                )
            self._densities[key] = FailureDensity(fs[factor])
        return self._densities[key]


def conditional_failure_probability(problem: RareEventProblem, factor, x, decision=0):
    """``Pr(F | X_factor = x)`` under ``decision``, clipped to [0, 1]."""
    if factor not in problem.priors:
        raise SchemaError(f"no prior distribution for factor {factor!r}")
    x = np.asarray(x, dtype=float)
    fx = pdf(problem.priors[factor], x)
    if np.any(fx < 1e-300):
        bad = np.atleast_1d(x)[np.atleast_1d(fx) < 1e-300][0]
        raise ArithmeticError(f"prior density of {factor} vanishes at x={bad:g}; Pr(F|x) is undefined there")
    p = problem.p_f[decision] * problem.density(factor, decision)(x) / fx
    return np.clip(p, 0.0, 1.0)


def evppi_rare(problem: RareEventProblem, factor, n=100_000, src: RandomSource | None = None):
    """Information value of ``factor`` by Monte Carlo over its prior.

    The prior optimum uses the exact prior failure probabilities; the value
    of each draw is ``max_a EU(x, a) - EU(x, a_opt)``.
    """
    if factor not in problem.priors:
        raise SchemaError(f"no prior distribution for factor {factor!r}")
    src = src or RandomSource(0)
    x = sample(problem.priors[factor], n, src)
    # keep draws where the prior density is representable
    x = x[pdf(problem.priors[factor], x) >= 1e-300]
    eu = np.column_stack([
        expected_utility_rare(conditional_failure_probability(problem, factor, x, k),
                              problem.u_fail[k], problem.u_safe[k])
        for k in range(problem.n_decisions)
    ])
    prior = [expected_utility_rare(p, uf, us) for p, uf, us in zip(problem.p_f, problem.u_fail, problem.u_safe)]
    a_opt = int(np.argmax(prior))
    est = Estimate.from_contributions(eu.max(axis=1) - eu[:, a_opt])
    return Estimate(est.value, est.raw, est.se, {"a_opt": a_opt, "n": len(x)})


def read_failure_csv(path, n_decisions=None):
    """Failure samples per decision from a CSV with factor columns and a ``decision`` column.

    Decisions are 1-based integers.  Returns a list indexed by decision of
    ``{factor: array}`` dicts.
    """
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise SchemaError(f"{path}: empty file")
    header = [h.strip() for h in rows[0]]
    if "decision" not in header:
        raise SchemaError(f"{path}: missing column 'decision'")
    if len(rows) == 1:
        raise SchemaError(f"{path}: no data rows")
    di = header.index("decision")
    names = [h for h in header if h != "decision"]
    cols = {h: [] for h in names}
    dec = []
    for r, row in enumerate(rows[1:], start=2):
        if len(row) != len(header):
            raise SchemaError(f"{path}: row {r} has {len(row)} fields, expected {len(header)}")
        for c, (h, cell) in enumerate(zip(header, row)):
            try:
                v = float(cell)
            except ValueError:
                raise SchemaError(f"{path}: row {r}, column {c + 1} ({h!r}): non-numeric value {cell!r}") from None
            if not math.isfinite(v):
                raise SchemaError(f"{path}: row {r}, column {c + 1} ({h!r}): non-finite value")
            if c == di:
                if v != int(v) or v < 1:
                    raise SchemaError(f"{path}: row {r}: decision must be a positive integer, got {cell!r}")
                dec.append(int(v))
            else:
                cols[h].append(v)
    dec = np.array(dec)
    n_a = n_decisions or int(dec.max())
    out = []
    for k in range(1, n_a + 1):
        sel = dec == k
        if not sel.any():
            raise SchemaError(f"{path}: no failure samples for decision {k}")
        out.append({h: np.asarray(cols[h])[sel] for h in names})
    return out
