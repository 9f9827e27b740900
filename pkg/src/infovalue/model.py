"""Decision problems: factors, decision spaces, utility models, sample tables.

Two built-in problems reproduce the protection-system example used
throughout the package documentation: a three-alternative discrete choice
and a continuous choice of the design resistance.  In both the load ``S`` is
the only aleatory factor and is integrated out analytically, so the sample
table holds epistemic factors and loss expectations only.
"""

from __future__ import annotations

import csv
import math
import re
from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

import numpy as np
from scipy import special

from .prob import EULER_GAMMA, DistributionSpec, RandomSource, integrate, sample

__all__ = [
    "SchemaError",
    "FactorSpec",
    "DecisionSpace",
    "Problem",
    "SampleTable",
    "WorkingExampleDiscrete",
    "WorkingExampleContinuous",
    "Tabulated",
    "QuadraticUtility",
    "LinexUtility",
    "working_example_discrete",
    "working_example_continuous",
    "ein",
    "exceedance_expected_loss",
    "draw_factors",
    "evaluate_utilities",
    "simulate",
    "prior_expected_utilities",
    "prior_optimum",
    "read_csv",
    "write_csv",
]

_UCOL = re.compile(r"^u_a(\d+)$")
_YCOL = re.compile(r"^y(_a(\d+))?$")


class SchemaError(ValueError):
    """A sample table or problem definition does not match the expected layout."""


@dataclass(frozen=True)
class FactorSpec:
    name: str
    dist: DistributionSpec
    uncertainty: str = "epistemic"

    def __post_init__(self):
        if not self.name or not re.match(r"^[A-Za-z_][A-Za-z0-9_]*$", self.name):
            raise ValueError(f"invalid factor name {self.name!r}")
        if self.uncertainty not in ("aleatory", "epistemic"):
            raise ValueError("uncertainty must be 'aleatory' or 'epistemic'")

    def to_dict(self):
        return {"name": self.name, "dist": self.dist.to_dict(), "class": self.uncertainty}

    @classmethod
    def from_dict(cls, d):
        return cls(d["name"], DistributionSpec.from_dict(d["dist"]), d.get("class", "epistemic"))


@dataclass(frozen=True)
class DecisionSpace:
    """Either discrete ``labels`` (at least two) or continuous ``bounds``."""

    labels: tuple[str, ...] | None = None
    bounds: tuple[float, float] | None = None

    def __post_init__(self):
        if (self.labels is None) == (self.bounds is None):
            raise ValueError("give exactly one of labels or bounds")
        if self.labels is not None:
            object.__setattr__(self, "labels", tuple(str(v) for v in self.labels))
            if len(self.labels) < 2:
                raise ValueError("a discrete decision space needs at least 2 alternatives")
            if len(set(self.labels)) != len(self.labels):
                raise ValueError("decision labels must be unique")
        else:
            lo, hi = (float(v) for v in self.bounds)
            if not lo < hi:
                raise ValueError("continuous decision space requires a_min < a_max")
            object.__setattr__(self, "bounds", (lo, hi))

    @classmethod
    def discrete(cls, labels):
        if isinstance(labels, int):
            labels = [f"a{k + 1}" for k in range(labels)]
        return cls(labels=tuple(labels))

    @classmethod
    def continuous(cls, lower, upper):
        return cls(bounds=(lower, upper))

    @property
    def is_discrete(self):
        return self.labels is not None

    @property
    def n(self):
        return len(self.labels) if self.labels is not None else None


# -- aleatory reduction ---------------------------------------------------


def ein(x):
    """Entire exponential integral ``Ein(x) = int_0^x (1 - e^-t) / t dt``.

    Power series below 1, ``E1(x) + ln x + gamma`` above; both branches are
    accurate to a few ulp.
    """
    x = np.asarray(x, dtype=float)
    out = np.empty_like(x)
    small = x < 1.0
    xs = x[small]
    term = xs.copy()
    acc = xs.copy()
    for k in range(2, 24):
        term = -term * xs / k
        acc += term / k
    out[small] = acc
    xl = x[~small]
    with np.errstate(over="ignore"):
        out[~small] = special.exp1(xl) + np.log(xl) + EULER_GAMMA
    return out[()] if out.ndim == 0 else out


def exceedance_expected_loss(m, r, c_f, scale=1.0, method="closed"):
    """``c_f * E[(S - r)^+]`` for a Gumbel load ``S`` with location ``m``.

    Writing the expectation as ``int_r^inf (1 - F_S(s)) ds`` and substituting
    ``u = exp(-(s - m) / scale)`` gives ``scale * int_0^u0 (1 - e^-u) / u du``
    with ``u0 = exp(-(r - m) / scale)``.  ``method="closed"`` evaluates that
    integral as :func:`ein` (vectorized); ``method="quadrature"`` integrates
    it adaptively and is meant for scalar checks.
    """
    m, r, c_f = np.broadcast_arrays(*(np.asarray(v, dtype=float) for v in (m, r, c_f)))
    if np.any(c_f < 0):
        raise ValueError("c_f must be >= 0")
    with np.errstate(over="ignore"):
        u0 = np.exp(-(r - m) / scale)
    if method == "closed":
        core = ein(u0)
    elif method == "quadrature":
        g = lambda u: -math.expm1(-u) / u if u > 0 else 1.0
        core = np.array([integrate(g, 0.0, float(v), rel_tol=1e-12) for v in u0.ravel()]).reshape(u0.shape)
    else:
        raise ValueError(f"unknown method {method!r}")
    out = c_f * scale * core
    return out[()] if out.ndim == 0 else out


# -- utility models -------------------------------------------------------


@dataclass(frozen=True)
class WorkingExampleDiscrete:
    """Three protection systems with resistances ``R1..R3`` and costs ``c_a``."""

    costs: tuple[float, ...] = (13e6, 15e6, 17e6)
    resistances: tuple[str, ...] = ("R1", "R2", "R3")

    def losses(self, x):
        m, cf = x["M"], x["CF"]
        return np.stack([exceedance_expected_loss(m, x[r], cf) for r in self.resistances], axis=1)

    def losses_full(self, x, s):
        return np.stack([x["CF"] * np.maximum(s - x[r], 0.0) for r in self.resistances], axis=1)

    def utilities(self, x):
        return -self.losses(x) - np.asarray(self.costs)

    def utilities_full(self, x, s):
        return -self.losses_full(x, s) - np.asarray(self.costs)


@dataclass(frozen=True)
class WorkingExampleContinuous:
    """Design resistance ``R = a * XR`` with cost ``a * 1e6 + 3e6``."""

    unit_cost: float = 1e6
    fixed_cost: float = 3e6

    def cost(self, a):
        return np.asarray(a, dtype=float) * self.unit_cost + self.fixed_cost

    def utility(self, x, a):
        return -exceedance_expected_loss(x["M"], np.asarray(a) * x["XR"], x["CF"]) - self.cost(a)

    def utility_full(self, x, s, a):
        return -x["CF"] * np.maximum(s - np.asarray(a) * x["XR"], 0.0) - self.cost(a)

    def optimum_given_all(self, x, s):
        """Decision under certainty: just enough resistance for the load."""
        return s / x["XR"]

    def optimum_given_epistemic(self, x):
        """Maximizer of ``E_S[u]`` for known epistemic factors.

        Setting the derivative ``c_f x_R (1 - F_S(a x_R)) - unit_cost`` to
        zero.  Returns NaN where ``c_f x_R <= unit_cost`` (no interior
        optimum).
        """
        ratio = self.unit_cost / (x["CF"] * x["XR"])
        with np.errstate(invalid="ignore", divide="ignore"):
            a = (-np.log(-np.log1p(-ratio)) + x["M"]) / x["XR"]
        return np.where(ratio < 1.0, a, np.nan)


@dataclass(frozen=True)
class Tabulated:
    """Utilities supplied per sample and decision in ``u_a<k>`` columns."""

    n_decisions: int


@dataclass(frozen=True)
class QuadraticUtility:
    """``u = -c (y - a)^2`` acting on an outcome column."""

    c: float = 1.0
    outcome: str = "y"

    def __post_init__(self):
        if self.c <= 0:
            raise ValueError("c must be > 0")

    def utility(self, y, a):
        return -self.c * (np.asarray(y) - np.asarray(a)) ** 2

    def optimum(self, y):
        return np.asarray(y, dtype=float)


@dataclass(frozen=True)
class LinexUtility:
    """``u = -c (exp(g d) - g d - 1)`` with ``d = y - a`` and asymmetry ``g``."""

    c: float = 1.0
    gamma: float = 1.0
    outcome: str = "y"

    def __post_init__(self):
        if self.c <= 0:
            raise ValueError("c must be > 0")
        if self.gamma <= 0:
            raise ValueError("LINEX gamma must be > 0")

    def utility(self, y, a):
        d = self.gamma * (np.asarray(y) - np.asarray(a))
        return -self.c * (np.expm1(d) - d)

    def optimum(self, y):
        return np.asarray(y, dtype=float)


@dataclass(frozen=True)
class Problem:
    name: str
    factors: tuple[FactorSpec, ...]
    decisions: DecisionSpace
    utility: object
    # description of aleatory factors integrated out by the builtin models
    aleatory: Mapping[str, str] = field(default_factory=dict)

    def __post_init__(self):
        names = [f.name for f in self.factors]
        if len(set(names)) != len(names):
            raise SchemaError("factor names must be unique")

    @property
    def factor_names(self):
        return [f.name for f in self.factors]

    def factor(self, name):
        for f in self.factors:
            if f.name == name:
                return f
        raise KeyError(f"unknown factor {name!r}")


def working_example_discrete():
    ln = DistributionSpec.lognormal
    factors = (
        FactorSpec("M", DistributionSpec.normal(7.5, 1.0)),
        FactorSpec("R1", ln(10.0, 1.0)),
        FactorSpec("R2", ln(12.0, 1.0)),
        FactorSpec("R3", ln(14.0, 1.0)),
        FactorSpec("CF", ln(3e7, 1e7)),
    )
    return Problem(
        "working-example-discrete",
        factors,
        DecisionSpace.discrete(["1", "2", "3"]),
        WorkingExampleDiscrete(),
        aleatory={"S": "Gumbel(loc=M, scale=1)"},
    )


def working_example_continuous(bounds=(4.0, 20.0)):
    ln = DistributionSpec.lognormal
    factors = (
        FactorSpec("M", DistributionSpec.normal(7.5, 1.0)),
        FactorSpec("XR", ln(1.0, 0.1)),
        FactorSpec("CF", ln(3e7, 1e7)),
    )
    return Problem(
        "working-example-continuous",
        factors,
        DecisionSpace.continuous(*bounds),
        WorkingExampleContinuous(),
        aleatory={"S": "Gumbel(loc=M, scale=1)"},
    )


# -- sample tables --------------------------------------------------------


@dataclass
class SampleTable:
    """Monte Carlo draws of the factors plus utilities or their ingredients.

    ``utilities`` is ``(n, n_a)`` for discrete problems.  Continuous problems
    carry ``utility_fn(a)`` returning the per-row utility at decision ``a``
    (scalar or length-``n`` array).  ``aleatory_reduced`` is true when the
    utilities are already expectations over the aleatory factors.
    """

    factors: dict[str, np.ndarray]
    utilities: np.ndarray | None = None
    decisions: tuple[str, ...] = ()
    outcomes: dict[str, np.ndarray] = field(default_factory=dict)
    utility_fn: Callable | None = None
    aleatory_reduced: bool = True
    problem: Problem | None = None

    def __post_init__(self):
        self.factors = {k: np.asarray(v, dtype=float) for k, v in self.factors.items()}
        self.outcomes = {k: np.asarray(v, dtype=float) for k, v in self.outcomes.items()}
        lengths = {len(v) for v in self.factors.values()} | {len(v) for v in self.outcomes.values()}
        if self.utilities is not None:
            self.utilities = np.asarray(self.utilities, dtype=float)
            if self.utilities.ndim != 2:
                raise SchemaError("utilities must be a 2-d (n, n_a) array")
            lengths.add(self.utilities.shape[0])
            if not self.decisions:
                self.decisions = tuple(str(k + 1) for k in range(self.utilities.shape[1]))
            if len(self.decisions) != self.utilities.shape[1]:
                raise SchemaError("decision labels do not match utility columns")
        if len(lengths) > 1:
            raise SchemaError(f"columns have differing lengths {sorted(lengths)}")
        if not lengths or lengths == {0}:
            raise SchemaError("sample table is empty")
        for name, col in list(self.factors.items()) + list(self.outcomes.items()):
            if not np.all(np.isfinite(col)):
                raise SchemaError(f"column {name!r} has missing or non-finite entries")
        if self.utilities is not None and not np.all(np.isfinite(self.utilities)):
            raise SchemaError("utility columns have missing or non-finite entries")

    @property
    def n(self):
        if self.utilities is not None:
            return self.utilities.shape[0]
        return len(next(iter(self.factors.values())))

    @property
    def factor_names(self):
        return list(self.factors)

    @property
    def is_discrete(self):
        return self.utilities is not None

    def column(self, name):
        if name in self.factors:
            return self.factors[name]
        if name in self.outcomes:
            return self.outcomes[name]
        m = _UCOL.match(name)
        if m and self.utilities is not None:
            return self.utilities[:, int(m.group(1)) - 1]
        raise KeyError(f"unknown column {name!r}")

    def conditioning(self, names):
        """``(n, d)`` matrix of the named factor columns."""
        if isinstance(names, str):
            names = [names]
        missing = [v for v in names if v not in self.factors and v not in self.outcomes]
        if missing:
            raise KeyError(f"unknown factor(s) {missing}")
        return np.column_stack([self.column(v) for v in names])

    def utility_at(self, a):
        if self.utility_fn is None:
            raise SchemaError("table has no per-sample utility function")
        return np.broadcast_to(self.utility_fn(a), (self.n,)).astype(float)

    def with_factor(self, name, values):
        fac = dict(self.factors)
        fac[name] = np.asarray(values, dtype=float)
        return SampleTable(fac, self.utilities, self.decisions, dict(self.outcomes),
                           self.utility_fn, self.aleatory_reduced, self.problem)


def draw_factors(problem: Problem, n: int, src: RandomSource, n_jobs: int = 1):
    """Independent draws of every factor, factor ``i`` from substream ``i``."""
    return {
        f.name: sample(f.dist, n, src.substream(i), n_jobs=n_jobs)
        for i, f in enumerate(problem.factors)
    }


def _draw_load(x, src, n_factors):
    g = sample(DistributionSpec.gumbel(0.0, 1.0), len(x["M"]), src.substream(n_factors))
    return x["M"] + g


def evaluate_utilities(problem: Problem, samples, src: RandomSource | None = None, aleatory="integrate"):
    """Build the :class:`SampleTable` for ``problem`` at the given factor draws.

    For the built-in models ``aleatory="integrate"`` replaces the load by its
    conditional expectation; ``aleatory="sample"`` draws ``S | M`` (needs
    ``src``) and stores it as factor ``S``.  For ``Tabulated`` problems
    ``samples`` must already be a :class:`SampleTable`, which is validated
    and returned unchanged.
    """
    u = problem.utility
    if isinstance(u, Tabulated):
        if not isinstance(samples, SampleTable):
            raise SchemaError("tabulated utilities must be supplied as a SampleTable")
        if samples.utilities is None or samples.utilities.shape[1] != u.n_decisions:
            have = 0 if samples.utilities is None else samples.utilities.shape[1]
            missing = [f"u_a{k + 1}" for k in range(have, u.n_decisions)]
            raise SchemaError(f"missing decision column(s) {missing}")
        absent = [f for f in problem.factor_names if f not in samples.factors]
        if absent:
            raise SchemaError(f"missing factor column(s) {absent}")
        return samples
    x = samples.factors if isinstance(samples, SampleTable) else {k: np.asarray(v, float) for k, v in samples.items()}
    if aleatory not in ("integrate", "sample"):
        raise ValueError("aleatory must be 'integrate' or 'sample'")
    if isinstance(u, (WorkingExampleDiscrete, WorkingExampleContinuous)):
        s = None
        if aleatory == "sample":
            if src is None:
                raise ValueError("sampling the aleatory load requires a RandomSource")
            s = _draw_load(x, src, len(problem.factors))
        if isinstance(u, WorkingExampleDiscrete):
            if s is None:
                return SampleTable(dict(x), u.utilities(x), problem.decisions.labels,
                                   outcomes={f"y_a{k + 1}": c for k, c in enumerate(u.losses(x).T)},
                                   problem=problem)
            fac = dict(x, S=s)
            return SampleTable(fac, u.utilities_full(x, s), problem.decisions.labels,
                               outcomes={f"y_a{k + 1}": c for k, c in enumerate(u.losses_full(x, s).T)},
                               aleatory_reduced=False, problem=problem)
        if s is None:
            return SampleTable(dict(x), utility_fn=lambda a, x=x: u.utility(x, a), problem=problem)
        fac = dict(x, S=s)
        return SampleTable(fac, utility_fn=lambda a, x=x, s=s: u.utility_full(x, s, a),
                           aleatory_reduced=False, problem=problem)
    if isinstance(u, (QuadraticUtility, LinexUtility)):
        if isinstance(samples, SampleTable):
            outcomes = samples.outcomes
        else:
            outcomes = {u.outcome: x.pop(u.outcome)} if u.outcome in x else {}
        if u.outcome not in outcomes:
            raise SchemaError(f"missing outcome column {u.outcome!r}")
        y = outcomes[u.outcome]
        return SampleTable(dict(x), outcomes=dict(outcomes), utility_fn=lambda a, y=y: u.utility(y, a),
                           problem=problem)
    raise SchemaError(f"unsupported utility model {type(u).__name__}")


def simulate(problem: Problem, n: int, src: RandomSource, aleatory="integrate", n_jobs: int = 1):
    """Draw ``n`` epistemic samples and evaluate the problem's utilities."""
    return evaluate_utilities(problem, draw_factors(problem, n, src, n_jobs=n_jobs), src, aleatory)


def prior_expected_utilities(table: SampleTable):
    if table.utilities is None:
        raise SchemaError("prior expected utilities need tabulated utility columns")
    if table.n < 1:
        raise ValueError("empty table")
    return table.utilities.mean(axis=0)


def prior_optimum(table_or_means):
    """Index of the best alternative; ties go to the lowest index."""
    eu = table_or_means if not isinstance(table_or_means, SampleTable) else prior_expected_utilities(table_or_means)
    eu = np.asarray(eu, dtype=float)
    if eu.size == 0:
        raise ValueError("no alternatives")
    return int(np.argmax(eu))


# -- CSV ------------------------------------------------------------------


def write_csv(table: SampleTable, path):
    """Write ``table`` with factor, outcome and ``u_a<k>`` columns."""
    cols = list(table.factors.items()) + list(table.outcomes.items())
    if table.utilities is not None:
        cols += [(f"u_a{k + 1}", table.utilities[:, k]) for k in range(table.utilities.shape[1])]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow([c for c, _ in cols])
        for row in zip(*(v for _, v in cols)):
            w.writerow([repr(float(v)) for v in row])


def read_csv(path, factor_names: Sequence[str] | None = None, n_decisions: int | None = None):
    """Read a sample table written by :func:`write_csv` or an external model.

    Columns ``u_a<k>`` are utilities, ``y`` / ``y_a<k>`` are outcomes and
    everything else is a factor.  Raises :class:`SchemaError` naming the row
    and column of the first bad cell.
    """
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    if not rows or not any(h.strip() for h in rows[0]):
        raise SchemaError(f"{path}: empty file")
    header = [h.strip() for h in rows[0]]
    if len(set(header)) != len(header):
        raise SchemaError(f"{path}: duplicate column names")
    body = [r for r in rows[1:] if any(c.strip() for c in r)]
    if not body:
        raise SchemaError(f"{path}: no data rows")
    data = np.empty((len(body), len(header)))
    for i, r in enumerate(body):
        if len(r) != len(header):
            raise SchemaError(f"{path}: row {i + 1} has {len(r)} cells, expected {len(header)}")
        for j, cell in enumerate(r):
            try:
                data[i, j] = float(cell)
            except ValueError:
                raise SchemaError(f"{path}: non-numeric cell at row {i + 1}, column {j + 1} ({header[j]!r}): {cell!r}") from None
            if not math.isfinite(data[i, j]):
                raise SchemaError(f"{path}: non-finite cell at row {i + 1}, column {j + 1} ({header[j]!r})")
    ucols = sorted((int(m.group(1)), j) for j, h in enumerate(header) if (m := _UCOL.match(h)))
    if ucols and [k for k, _ in ucols] != list(range(1, len(ucols) + 1)):
        raise SchemaError(f"{path}: utility columns must be u_a1..u_a{len(ucols)}")
    if n_decisions is not None and len(ucols) != n_decisions:
        missing = [f"u_a{k}" for k in range(len(ucols) + 1, n_decisions + 1)]
        raise SchemaError(f"{path}: expected {n_decisions} utility columns, missing {missing}")
    outcomes = {h: data[:, j] for j, h in enumerate(header) if _YCOL.match(h)}
    factors = {h: data[:, j] for j, h in enumerate(header) if not _UCOL.match(h) and not _YCOL.match(h)}
    if factor_names is not None:
        absent = [f for f in factor_names if f not in factors]
        if absent:
            raise SchemaError(f"{path}: missing factor column(s) {absent}")
    utilities = data[:, [j for _, j in ucols]] if ucols else None
    return SampleTable(factors, utilities, outcomes=outcomes)
