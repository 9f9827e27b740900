"""Command-line front end.

Verbs::

    run         --config C --out DIR    simulate a builtin scenario and report
    ingest-run  --samples CSV [--config C] --out DIR   analyse an external sample table
    tables      --scenario NAME         print the builtin scenario tables
    plot-data   --config C --out DIR    write plot-data CSVs

Exit codes: 0 success, 1 configuration or schema error, 2 numeric failure.
"""

from __future__ import annotations

import argparse
import dataclasses
import os
import sys

import numpy as np

from .model import SchemaError, Tabulated, read_csv
from .prob import IntegrationError
from .report import (
    BUILTIN_SCENARIOS,
    ConfigError,
    RunConfig,
    emit_scenario_tables,
    load_config,
    plot_data,
    render_text,
    report_json,
    run_analysis,
    write_atomic,
    write_plot_data,
)
from .smoothing import METHODS, FitError
from .voi import StateError

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC = 0, 1, 2


def _parser():
    p = argparse.ArgumentParser(prog="infovalue", description="Information value and decision sensitivity.")
    sub = p.add_subparsers(dest="verb", required=True)

    def common(sp, need_config):
        sp.add_argument("--config", required=need_config, help="run configuration (JSON)")
        sp.add_argument("--out", required=True, help="output directory")
        sp.add_argument("--seed", type=int, help="override analysis.seed")
        sp.add_argument("-n", "--n-samples", type=int, dest="n_samples", help="override analysis.n_samples")
        sp.add_argument("--estimator", choices=("reoptimize", "plugin"))
        sp.add_argument("--smoother", choices=METHODS, help="override the smoother method")

    common(sub.add_parser("run", help="simulate a builtin scenario and write reports"), True)
    ing = sub.add_parser("ingest-run", help="analyse samples from a CSV file")
    common(ing, False)
    ing.add_argument("--samples", required=True, help="sample table CSV")
    tab = sub.add_parser("tables", help="print the tables of a builtin scenario")
    tab.add_argument("--scenario", required=True, choices=BUILTIN_SCENARIOS)
    tab.add_argument("-n", "--n-samples", "--samples", type=int, default=100_000, dest="n_samples")
    tab.add_argument("--seed", type=int, default=42)
    common(sub.add_parser("plot-data", help="write plot-data CSVs"), True)
    return p


def _config(args):
    cfg = load_config(args.config) if args.config else RunConfig.from_dict({})
    if args.seed is not None:
        cfg.seed = args.seed
    if args.n_samples is not None:
        cfg.n_samples = args.n_samples
    if args.estimator:
        cfg.estimator = args.estimator
    if args.smoother:
        cfg.smoother = dataclasses.replace(cfg.smoother, method=args.smoother)
    cfg.validate()
    return cfg


def _write_reports(rep, table, cfg, out, plots):
    write_atomic(os.path.join(out, "report.json"), report_json(rep))
    title = cfg.scenario or (cfg.problem.name if cfg.problem else "sample table")
    write_atomic(os.path.join(out, "report.txt"), render_text(rep, title))
    if plots:
        write_plot_data(plot_data(rep, table, cfg, plots), out)


def _dispatch(args):
    if args.verb == "tables":
        sys.stdout.write(emit_scenario_tables(args.scenario, args.n_samples, args.seed))
        return
    cfg = _config(args)
    if args.verb == "ingest-run":
        names = cfg.problem.factor_names if cfg.problem else None
        n_dec = cfg.problem.decisions.n if cfg.problem and isinstance(cfg.problem.utility, Tabulated) else None
        table = read_csv(args.samples, names, n_dec)
        rep, table = run_analysis(cfg, table)
        _write_reports(rep, table, cfg, args.out, cfg.plot_data)
    elif args.verb == "run":
        rep, table = run_analysis(cfg)
        _write_reports(rep, table, cfg, args.out, cfg.plot_data)
    else:
        rep, table = run_analysis(cfg)
        write_plot_data(plot_data(rep, table, cfg), args.out)


def main(argv=None):
    args = _parser().parse_args(argv)
    context = f"{args.config}: " if getattr(args, "config", None) else ""
    try:
        with np.errstate(all="ignore"):
            _dispatch(args)
    except (ArithmeticError, FitError, IntegrationError, np.linalg.LinAlgError) as e:
        print(f"infovalue: {context}numeric failure: {e}", file=sys.stderr)
        return EXIT_NUMERIC
    except (ConfigError, SchemaError, StateError, KeyError, ValueError, OSError) as e:
        msg = e.args[0] if isinstance(e, KeyError) and e.args else e
        print(f"infovalue: {context}{msg}", file=sys.stderr)
        return EXIT_CONFIG
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
