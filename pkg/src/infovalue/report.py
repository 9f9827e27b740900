"""Run configuration, analysis orchestration and report/plot-data output.

A run is described by a JSON document::

    {
      "problem": "working-example-discrete",
      "analysis": {"factors": "all", "n_samples": 100000, "seed": 42,
                   "estimator": "reoptimize", "smoother": {"method": "loess", "span": 0.3},
                   "sample_information": [{"factor": "M", "n_s": [1, 2, 5]}]},
      "plot_data": ["conditional_utility", "cvppi"]
    }

``problem`` is a builtin scenario name or an inline definition with
``factors``, ``decisions`` and ``utility`` (see :func:`problem_from_dict`).
Inline problems have no simulator, so their samples come from a CSV file.
"""

from __future__ import annotations

import copy
import csv
import io
import json
import math
import os
import tempfile
from dataclasses import dataclass, field

import numpy as np

from .continuous import analyze_continuous
from .model import (
    DecisionSpace,
    FactorSpec,
    LinexUtility,
    Problem,
    QuadraticUtility,
    SampleTable,
    SchemaError,
    Tabulated,
    WorkingExampleContinuous,
    WorkingExampleDiscrete,
    evaluate_utilities,
    simulate,
    working_example_continuous,
    working_example_discrete,
)
from .prob import RandomSource
from .smoothing import SmootherConfig, fit_many
from .voi import (
    VoiReport,
    _jsonable,
    analyze,
    cvppi_profile,
    gumbel_location_sampler,
    gumbel_sufficient_statistic,
    sample_information_value,
)

__all__ = [
    "ConfigError",
    "RunConfig",
    "BUILTIN_SCENARIOS",
    "PLOT_SERIES",
    "builtin_problem",
    "problem_from_dict",
    "load_config",
    "run_analysis",
    "render_text",
    "emit_scenario_tables",
    "plot_data",
    "write_plot_data",
    "write_atomic",
]

BUILTIN_SCENARIOS = ("working-example-discrete", "working-example-continuous")
PLOT_SERIES = ("conditional_utility", "cvppi", "sample_information", "optimum_map", "scatter")
_ANALYSIS_KEYS = {
    "factors", "groups", "estimator", "smoother", "surface_smoother", "n_samples", "seed",
    "sample_information", "normalizer", "aleatory", "bounds", "n_jobs", "n_knots",
}
_BUILTIN_UNITS = {"CF": "EUR", "utility": "EUR", "a": "-"}


class ConfigError(ValueError):
    """The run configuration is malformed or inconsistent."""


def builtin_problem(name):
    if name == "working-example-discrete":
        return working_example_discrete()
    if name == "working-example-continuous":
        return working_example_continuous()
    raise ConfigError(f"unknown scenario {name!r}; choose from {list(BUILTIN_SCENARIOS)}")


def problem_from_dict(d):
    """Inline problem definition.

    ``factors`` is a list of ``{"name", "dist": {"kind", ...}, "class"}``;
    ``decisions`` is ``{"labels": [...]}``, ``{"n": k}`` or
    ``{"bounds": [lo, hi]}``; ``utility`` is ``{"kind": "tabulated"}``,
    ``{"kind": "quadratic", "c", "outcome"}`` or ``{"kind": "linex", "c",
    "gamma", "outcome"}``.
    """
    if not isinstance(d, dict):
        raise ConfigError("problem must be a scenario name or an object")
    try:
        factors = tuple(FactorSpec.from_dict(f) for f in d.get("factors", []))
        dec = d.get("decisions")
        if not isinstance(dec, dict):
            raise ConfigError("problem.decisions must be an object")
        if "bounds" in dec:
            space = DecisionSpace.continuous(*dec["bounds"])
        elif "labels" in dec:
            space = DecisionSpace.discrete(dec["labels"])
        elif "n" in dec:
            space = DecisionSpace.discrete([str(k + 1) for k in range(int(dec["n"]))])
        else:
            raise ConfigError("problem.decisions needs labels, n or bounds")
        u = dict(d.get("utility", {"kind": "tabulated"}))
        kind = u.pop("kind", None)
        if kind == "tabulated":
            if not space.is_discrete:
                raise ConfigError("tabulated utilities need a discrete decision space")
            utility = Tabulated(space.n)
        elif kind == "quadratic":
            utility = QuadraticUtility(**u)
        elif kind == "linex":
            utility = LinexUtility(**u)
        else:
            raise ConfigError(f"unknown utility kind {kind!r}")
        return Problem(d.get("name", "inline"), factors, space, utility)
    except (KeyError, TypeError) as e:
        raise ConfigError(f"invalid problem definition: {e}") from None


@dataclass
class RunConfig:
    problem: Problem | None
    scenario: str | None = None
    factors: list[str] | str = "all"
    groups: list[list[str]] = field(default_factory=list)
    estimator: str = "reoptimize"
    smoother: SmootherConfig = field(default_factory=SmootherConfig)
    surface_smoother: SmootherConfig | None = None
    n_samples: int = 100_000
    seed: int = 42
    sample_information: list[dict] = field(default_factory=list)
    normalizer: str | None = None
    aleatory: str = "integrate"
    bounds: tuple[float, float] | None = None
    n_jobs: int = 1
    n_knots: int = 50
    plot_data: list[str] = field(default_factory=list)
    units: dict = field(default_factory=dict)
    raw: dict = field(default_factory=dict)

    @classmethod
    def from_dict(cls, d):
        if not isinstance(d, dict):
            raise ConfigError("configuration must be a JSON object")
        extra = sorted(set(d) - {"problem", "analysis", "plot_data", "units"})
        if extra:
            raise ConfigError(f"unknown top-level key(s) {extra}")
        raw = copy.deepcopy(d)
        p = d.get("problem")
        scenario = None
        if isinstance(p, str):
            scenario, problem = p, builtin_problem(p)
        elif p is None:
            problem = None
        else:
            problem = problem_from_dict(p)
        a = dict(d.get("analysis", {}))
        unknown = sorted(set(a) - _ANALYSIS_KEYS)
        if unknown:
            raise ConfigError(f"unknown analysis key(s) {unknown}")
        try:
            smoother = SmootherConfig.from_dict(a.get("smoother", {}))
            surface = SmootherConfig.from_dict(a["surface_smoother"]) if a.get("surface_smoother") else None
        except (TypeError, ValueError) as e:
            raise ConfigError(f"invalid smoother configuration: {e}") from None
        cfg = cls(
            problem=problem,
            scenario=scenario,
            factors=a.get("factors", "all"),
            groups=[list(g) for g in a.get("groups", [])],
            estimator=a.get("estimator", "reoptimize"),
            smoother=smoother,
            surface_smoother=surface,
            n_samples=a.get("n_samples", 100_000),
            seed=a.get("seed", 42),
            sample_information=list(a.get("sample_information", [])),
            normalizer=a.get("normalizer"),
            aleatory=a.get("aleatory", "integrate"),
            bounds=tuple(a["bounds"]) if a.get("bounds") is not None else None,
            n_jobs=a.get("n_jobs", 1),
            n_knots=a.get("n_knots", 50),
            plot_data=list(d.get("plot_data", [])),
            units=dict(d.get("units", {})),
            raw=raw,
        )
        cfg.validate()
        return cfg

    def validate(self):
        if self.estimator not in ("reoptimize", "plugin"):
            raise ConfigError(f"estimator must be 'reoptimize' or 'plugin', got {self.estimator!r}")
        if self.normalizer not in (None, "evpi", "evpm"):
            raise ConfigError(f"normalizer must be 'evpi' or 'evpm', got {self.normalizer!r}")
        if self.aleatory not in ("integrate", "sample"):
            raise ConfigError("aleatory must be 'integrate' or 'sample'")
        for name, v, lo in (("n_samples", self.n_samples, 1), ("n_jobs", self.n_jobs, 1), ("n_knots", self.n_knots, 1)):
            if not isinstance(v, int) or isinstance(v, bool) or v < lo:
                raise ConfigError(f"{name} must be an integer >= {lo}")
        if not isinstance(self.seed, int) or isinstance(self.seed, bool) or not 0 <= self.seed < 2**64:
            raise ConfigError("seed must be a non-negative integer")
        bad = [s for s in self.plot_data if s not in PLOT_SERIES]
        if bad:
            raise ConfigError(f"unknown plot series {bad}; choose from {list(PLOT_SERIES)}")
        if self.factors != "all" and (not isinstance(self.factors, list) or not self.factors):
            raise ConfigError("analysis.factors must be 'all' or a non-empty list")
        for g in self.groups:
            if not 1 <= len(g) <= 2:
                raise ConfigError(f"groups must have 1 or 2 factors, got {g}")
        for req in self.sample_information:
            if not isinstance(req, dict) or "factor" not in req:
                raise ConfigError("sample_information entries need a 'factor'")
            ns = req.get("n_s", [1, 2, 5, 10, 20, 50, 100])
            if not isinstance(ns, list) or any(not isinstance(v, int) or v < 0 for v in ns):
                raise ConfigError("sample_information n_s must be a list of non-negative integers")
        if self.problem is not None:
            self.check_factors(self.problem.factor_names)

    def check_factors(self, available):
        wanted = [] if self.factors == "all" else list(self.factors)
        wanted += [v for g in self.groups for v in g]
        wanted += [r["factor"] for r in self.sample_information]
        for v in wanted:
            if v not in available:
                raise ConfigError(f"unknown factor {v!r}; available: {list(available)}")

    def echo(self, **overrides):
        d = copy.deepcopy(self.raw)
        a = d.setdefault("analysis", {})
        a.update(
            factors=self.factors, estimator=self.estimator, smoother=self.smoother.to_dict(),
            n_samples=self.n_samples, seed=self.seed,
        )
        if self.normalizer:
            a["normalizer"] = self.normalizer
        a.update(overrides)
        return d


def load_config(path):
    try:
        with open(path, encoding="utf-8") as fh:
            d = json.load(fh)
    except OSError as e:
        raise ConfigError(f"cannot read config: {e.strerror}") from None
    except json.JSONDecodeError as e:
        raise ConfigError(f"invalid JSON at line {e.lineno}, column {e.colno}: {e.msg}") from None
    return RunConfig.from_dict(d)


# -- analysis --------------------------------------------------------------


def build_table(cfg: RunConfig, table: SampleTable | None = None):
    """The sample table for a run: simulated for builtins, validated CSV otherwise."""
    problem = cfg.problem
    if table is None:
        if problem is None or not isinstance(problem.utility, (WorkingExampleDiscrete, WorkingExampleContinuous)):
            raise ConfigError("this problem has no simulator; supply samples with ingest-run")
        return simulate(problem, cfg.n_samples, RandomSource(cfg.seed), aleatory=cfg.aleatory, n_jobs=cfg.n_jobs)
    if problem is None:
        if table.utilities is None:
            raise SchemaError("samples have no u_a<k> utility columns and no problem defines a utility")
        return table
    missing = [f for f in problem.factor_names if f not in table.factors]
    if missing:
        raise SchemaError(f"missing factor column(s) {missing}")
    if isinstance(problem.utility, Tabulated):
        table = evaluate_utilities(problem, table)
        table = SampleTable({f: table.factors[f] for f in problem.factor_names}, table.utilities,
                            problem.decisions.labels, table.outcomes, aleatory_reduced=table.aleatory_reduced,
                            problem=problem)
        return table
    if isinstance(problem.utility, (QuadraticUtility, LinexUtility)):
        fac = SampleTable({f: table.factors[f] for f in problem.factor_names}, outcomes=table.outcomes)
        return evaluate_utilities(problem, fac)
    return evaluate_utilities(problem, {f: table.factors[f] for f in problem.factor_names})


def run_analysis(cfg: RunConfig, table: SampleTable | None = None):
    """Analyse ``cfg``'s problem; returns ``(report, table)``."""
    table = build_table(cfg, table)
    cfg.check_factors(table.factor_names)
    factors = cfg.factors
    if table.is_discrete:
        normalizer = cfg.normalizer or ("evpm" if table.aleatory_reduced else "evpi")
        rep = analyze(table, factors, cfg.groups, cfg.estimator, cfg.smoother, normalizer, n_jobs=cfg.n_jobs)
        src = RandomSource(cfg.seed, 2)
        for i, req in enumerate(cfg.sample_information):
            rep.sample_information.append(_sample_information(table, req, src.substream(i), cfg))
    else:
        if cfg.groups:
            raise ConfigError("factor groups are not supported for continuous decisions")
        if cfg.sample_information:
            raise ConfigError("sample information values are supported for discrete decisions only")
        normalizer = cfg.normalizer or ("evpm" if cfg.problem is not None and isinstance(
            cfg.problem.utility, WorkingExampleContinuous) else "evpi")
        bounds = cfg.bounds or (cfg.problem.decisions.bounds if cfg.problem else None)
        rep = analyze_continuous(table, factors, bounds, RandomSource(cfg.seed, 1), cfg.smoother,
                                 cfg.estimator, normalizer, n_knots=cfg.n_knots, surface=cfg.surface_smoother)
    rep.config_echo = cfg.echo(normalizer=normalizer)
    rep.diagnostics["seed"] = cfg.seed
    if table.outcomes and table.is_discrete:
        ycols = [f"y_a{k + 1}" for k in range(len(table.decisions))]
        if all(c in table.outcomes for c in ycols):
            rep.diagnostics["expected_outcomes"] = [float(table.outcomes[c].mean()) for c in ycols]
    return rep, table


def _sample_information(table, req, src, cfg):
    """Value of Gumbel-location data about ``req['factor']`` for each ``n_s``."""
    factor = req["factor"]
    out = {"factor": factor, "n_s": [], "V": [], "V_se": [], "V_raw": []}
    for n_s in req.get("n_s", [1, 2, 5, 10, 20, 50, 100]):
        e = sample_information_value(table, factor, n_s, gumbel_location_sampler, gumbel_sufficient_statistic,
                                     src, cfg.smoother, cfg.estimator, transform=np.log)
        out["n_s"].append(n_s)
        out["V"].append(e.value)
        out["V_se"].append(e.se)
        out["V_raw"].append(e.raw)
    return out


# -- text ------------------------------------------------------------------


def _fmt(v, digits=4):
    if v is None or (isinstance(v, float) and not math.isfinite(v)):
        return "n/a"
    return f"{v:.{digits}g}"


def _pct(v):
    return "n/a" if v is None else f"{100 * v:.1f}%"


def _table(rows, header):
    widths = [max(len(str(r[i])) for r in rows + [header]) for i in range(len(header))]
    line = lambda r: "  ".join(str(c).ljust(w) if i == 0 else str(c).rjust(w) for i, (c, w) in enumerate(zip(r, widths)))
    return "\n".join([line(header), "  ".join("-" * w for w in widths)] + [line(r) for r in rows])


def render_text(rep: VoiReport, title=""):
    """Aligned plain-text rendering of a report (headline values clipped)."""
    out = []
    if title:
        out += [title, ""]
    d = rep.diagnostics
    out.append(f"n = {d.get('n')}, estimator = {d.get('estimator')}, smoother = {d.get('smoother', {}).get('method')}")
    out.append("")
    if rep.decisions is not None:
        rows = []
        loss = d.get("expected_outcomes")
        for k, lab in enumerate(rep.decisions):
            rows.append([lab, _fmt(loss[k]) if loss else "n/a", _fmt(rep.expected_utilities[k])])
        out += ["Expected results", _table(rows, ["decision", "expected loss", "expected utility"]), ""]
        out.append(f"a_opt = {rep.a_opt}")
    else:
        eu = rep.expected_utilities[0] if rep.expected_utilities else None
        out.append(f"a_opt = {rep.a_opt:.4g}  (expected utility {_fmt(eu)})")
    if rep.evpi is not None:
        out.append(f"EVPI = {_fmt(rep.evpi.value)} +/- {_fmt(rep.evpi.se, 2)}")
    if rep.evpm is not None:
        out.append(f"EVPM = {_fmt(rep.evpm.value)} +/- {_fmt(rep.evpm.se, 2)}")
    out.append("")
    rows = []
    for f in rep.factors:
        rows.append([
            f.name,
            _fmt(f.V.value),
            _fmt(f.V.se, 2),
            _pct(f.relative_V),
            "n/a" if f.DC is None else f"{f.DC.value:.3f}",
            "n/a" if f.DC is None else f"{f.DC.se:.3f}",
            "n/a" if f.sobol_first is None else _pct(f.sobol_first.value),
            "n/a" if f.sobol_first is None else _pct(f.sobol_first.se),
        ])
    header = ["factor", "V", "SE(V)", f"V/{rep.normalizer.upper()}", "DC", "SE(DC)", "Sobol'", "SE(Sobol')"]
    out += ["Information values", _table(rows, header)]
    for si in rep.sample_information:
        rows = [[n, _fmt(v), _fmt(s, 2)] for n, v, s in zip(si["n_s"], si["V"], si["V_se"])]
        out += ["", f"Sample information about {si['factor']}", _table(rows, ["n_s", "V_Z", "SE(V_Z)"])]
    return "\n".join(out) + "\n"


def emit_scenario_tables(scenario, n=100_000, seed=42):
    """Text tables for a builtin scenario with Monte Carlo standard errors."""
    cfg = RunConfig.from_dict({"problem": scenario, "analysis": {"n_samples": n, "seed": seed}})
    rep, _ = run_analysis(cfg)
    return render_text(rep, f"{scenario} (seed {seed})")


# -- plot data -------------------------------------------------------------


def _unit(cfg, name):
    if name in cfg.units:
        return str(cfg.units[name])
    if cfg.scenario is not None:
        return _BUILTIN_UNITS.get(name, "-")
    return "-"


def _grid(x, m=101):
    lo, hi = np.quantile(x, [0.01, 0.99])
    return np.linspace(lo, hi, m) if hi > lo else np.array([lo])


def plot_data(rep: VoiReport, table: SampleTable, cfg: RunConfig, series=None):
    """Named CSV series: ``{name: (header, units, rows)}``."""
    series = list(series or cfg.plot_data or PLOT_SERIES)
    uu = _unit(cfg, "utility")
    out = {}
    singles = [f for f in rep.factors if len(f.factors) == 1]
    if table.is_discrete:
        a_opt = rep.diagnostics["a_opt_index"]
        for f in singles:
            v = f.name
            x = table.column(v)
            sm = fit_many(x, table.utilities, cfg.smoother)
            g = _grid(x)
            if "conditional_utility" in series:
                S = np.column_stack([s(g) for s in sm])
                out[f"conditional_utility_{v}"] = (
                    [v] + [f"E[u|{v}]_a{k + 1}" for k in range(S.shape[1])],
                    [_unit(cfg, v)] + [uu] * S.shape[1],
                    np.column_stack([g, S]),
                )
            if "cvppi" in series:
                out[f"cvppi_{v}"] = ([v, "cvppi"], [_unit(cfg, v), uu],
                                     np.column_stack([g, cvppi_profile(sm, a_opt)(g)]))
            if "scatter" in series:
                idx = _downsample(table.n, cfg.seed)
                xs = x[idx]
                out[f"scatter_{v}"] = ([v, "u_opt", "smoothed"], [_unit(cfg, v), uu, uu],
                                       np.column_stack([xs, table.utilities[idx, a_opt], sm[a_opt](xs)]))
        if "sample_information" in series:
            for si in rep.sample_information:
                out[f"sample_information_{si['factor']}"] = (
                    ["n_s", "V_Z", "V_Z_se"], ["-", uu, uu],
                    np.column_stack([si["n_s"], si["V"], si["V_se"]]),
                )
    else:
        maps = getattr(rep, "maps", {})
        for f in singles:
            v = f.name
            if "optimum_map" in series and v in maps:
                m = maps[v]
                out[f"optimum_map_{v}"] = ([f"{v}_knot", "a_opt"], [_unit(cfg, v), _unit(cfg, "a")],
                                           np.column_stack([m.knots, m.values]))
            if "scatter" in series:
                x = table.column(v)
                y = table.utility_at(rep.a_opt)
                s = fit_many(x, y, cfg.smoother)[0]
                idx = _downsample(table.n, cfg.seed)
                out[f"scatter_{v}"] = ([v, "u_opt", "smoothed"], [_unit(cfg, v), uu, uu],
                                       np.column_stack([x[idx], y[idx], s(x[idx])]))
    return out


def _downsample(n, seed, m=2000):
    if n <= m:
        return np.arange(n)
    return np.sort(RandomSource(seed, 3).generator().choice(n, m, replace=False))


def _csv_text(header, units, rows):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerow(units)
    for r in np.atleast_2d(rows):
        w.writerow([repr(float(v)) for v in r])
    return buf.getvalue()


def write_plot_data(data, out_dir):
    paths = []
    for name in sorted(data):
        path = os.path.join(out_dir, f"{name}.csv")
        write_atomic(path, _csv_text(*data[name]))
        paths.append(path)
    return paths


def write_atomic(path, text):
    """Write ``text`` to ``path`` through a temporary file and a rename."""
    d = os.path.dirname(os.path.abspath(path))
    os.makedirs(d, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".tmp-", suffix=os.path.basename(path))
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def report_json(rep: VoiReport):
    return json.dumps(_jsonable(rep.to_dict()), indent=2, sort_keys=True) + "\n"
