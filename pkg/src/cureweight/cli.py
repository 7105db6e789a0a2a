"""Command-line front end.

    cureweight estimate --historical H.csv --trial T.csv --out DIR [--bootstrap N --seed S]
    cureweight curves   --historical H.csv --trial T.csv --out DIR [--times 25,50,100]
    cureweight weights  --historical H.csv --trial T.csv --out DIR --weights maic
    cureweight simulate --config grid.yaml --out DIR --seed S [--survival]

Exit codes: 0 success, 1 computation error, 2 usage or I/O error. Errors are
reported on stderr as a JSON object.
"""

from __future__ import annotations

import argparse
import json
import sys
import warnings
from pathlib import Path

import numpy as np
import yaml

from . import __version__
from .calibration import weight_diagnostics, write_weights
from .cohort import CohortSchema, load_cohort
from .errors import CureWeightError, ParseError, SchemaError, ValidationError
from .estimators import estimate_survival_po
from .inference import BootstrapSpec, bootstrap_estimate, write_replicates
from .pipeline import ESTIMATORS, WEIGHT_METHODS, Pipeline, build_weights
from .pseudo import pseudo_cure
from .simulation import (
    SURVIVAL_TIMES,
    ScenarioSpec,
    load_grid,
    render_table,
    run_scenario,
    run_survival_scenario,
    write_replicates_long,
)
from .survival import (
    evaluate,
    kaplan_meier,
    last_observed_time,
    plateau_diagnostic,
    uniform_weights,
    weighted_kaplan_meier,
    write_curve_csv,
)

EXIT_OK, EXIT_COMPUTE, EXIT_USAGE = 0, 1, 2
USAGE_ERRORS = (SchemaError, ParseError, ValidationError, OSError)


class UsageError(Exception):
    pass


def _fail(exc, code):
    payload = {"error": type(exc).__name__, "message": str(exc), "exit_code": code}
    if isinstance(exc, OSError) and getattr(exc, "filename", None):
        payload["path"] = str(exc.filename)
    print(json.dumps(payload), file=sys.stderr)
    return code


class Outputs:
    """Write-once output directory."""

    def __init__(self, root):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)
        self.written = []

    def path(self, name) -> Path:
        p = self.root / name
        if p.exists():
            raise UsageError(f"refusing to overwrite existing output {p}")
        self.written.append(str(p))
        return p

    def json(self, name, obj):
        self.path(name).write_text(json.dumps(obj, indent=2, default=_jsonable) + "\n", encoding="utf-8")

    def text(self, name, text):
        self.path(name).write_text(text, encoding="utf-8")


def _jsonable(o):
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(type(o).__name__)


def _read_config(path):
    if path is None:
        return {}
    p = Path(path)
    if not p.exists():
        raise FileNotFoundError(2, "config file not found", str(p))
    try:
        doc = yaml.safe_load(p.read_text(encoding="utf-8")) or {}
    except yaml.YAMLError as exc:
        raise ValidationError(f"{p}: invalid config: {exc}") from None
    if not isinstance(doc, (dict, list)):
        raise ValidationError(f"{p}: config must be a mapping")
    return doc


def _parse_times(text):
    if text is None:
        return None
    try:
        times = [float(t) for t in str(text).replace(" ", "").split(",") if t]
    except ValueError:
        raise UsageError(f"--times must be a comma-separated list of numbers, got {text!r}") from None
    if any(t < 0 for t in times):
        raise UsageError("--times must be non-negative")
    return times


def _load_inputs(args, config):
    schema = CohortSchema.from_mapping(config)
    hist_path = args.historical or config.get("historical")
    trial_path = args.trial or config.get("trial")
    if not hist_path:
        raise UsageError("--historical is required")
    if not trial_path:
        raise UsageError("--trial is required")
    for p in (hist_path, trial_path):
        if not Path(p).exists():
            raise FileNotFoundError(2, "input file not found", str(p))
    hist = load_cohort(hist_path, schema, label="historical")
    trial = load_cohort(trial_path, schema, label="trial")
    if trial.covariate_names != hist.covariate_names:
        raise ValidationError("historical and trial files have different covariate columns")
    return hist, trial


def _methods(choice, allowed):
    return list(allowed) if choice == "all" else [choice]


def cmd_estimate(args, config, out: Outputs) -> int:
    hist, trial = _load_inputs(args, config)
    weight_choices = _methods(args.weights, WEIGHT_METHODS) if args.weights else list(WEIGHT_METHODS)
    estimators = _methods(args.estimator, ESTIMATORS)
    if args.bootstrap and args.seed is None:
        raise UsageError("--seed is required with --bootstrap")
    report = plateau_diagnostic(kaplan_meier(hist), hist)
    if not report.sufficient_follow_up:
        print(f"warning: {report}", file=sys.stderr)

    combos = []
    for est in estimators:
        if est == "direct":
            combos.append(Pipeline("none", "direct"))
        else:
            combos.extend(Pipeline(w, est) for w in weight_choices)

    records, samples, failed = [], {}, False
    for k, pipe in enumerate(combos):
        rec = {"method": pipe.estimator,
               "weight_method": "uniform" if pipe.weight_method == "none" else pipe.weight_method}
        try:
            with warnings.catch_warnings():
                warnings.simplefilter("ignore")
                result = pipe(hist, trial)
            rec.update(result.to_record())
            if args.bootstrap:
                spec = BootstrapSpec(args.bootstrap, args.seed, args.ci,
                                     "logit" if pipe.estimator == "pol" else "identity")
                interval = bootstrap_estimate(hist, trial, pipe, spec, args.threads)
                rec["bootstrap"] = interval.to_record()
                tag = f"{pipe.estimator}_{pipe.weight_method}"
                write_replicates(interval, out.path(f"bootstrap_{tag}.csv"))
                samples[f"{rec['weight_method']}/{pipe.estimator}"] = interval.estimates
        except CureWeightError as exc:
            failed = True
            rec.update({"estimate": None, "error": type(exc).__name__, "message": str(exc)})
        records.append(rec)

    out.json("estimates.json", {
        "historical_n": hist.n, "trial_n": trial.n,
        "excluded_rows": {"historical": hist.excluded_count, "trial": trial.excluded_count},
        "last_observed_time": last_observed_time(hist),
        "follow_up": {"sufficient": report.sufficient_follow_up, "note": str(report)},
        "results": records,
    })
    if samples and not args.no_plots:
        from .plots import plot_distributions
        plot_distributions(samples, out.path("bootstrap_distribution.png"))
    for rec in records:
        val = rec.get("estimate")
        shown = "failed: " + rec["message"] if val is None else f"{val:.4f}"
        print(f"{rec['weight_method']:>8} {rec['method']:>6}  {shown}")
    return EXIT_COMPUTE if failed else EXIT_OK


def cmd_curves(args, config, out: Outputs) -> int:
    hist, trial = _load_inputs(args, config)
    km = kaplan_meier(hist)
    times = _parse_times(args.times) or [float(t) for t in km.times]
    t_n = last_observed_time(hist)
    beyond = [t for t in times if t > t_n]
    if beyond:
        print(f"warning: {len(beyond)} grid time(s) beyond the last observed time {t_n:g}; "
              f"curves are extrapolated flat", file=sys.stderr)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        pos = pseudo_cure(hist, warn=False)
        w_maic, _ = build_weights(hist, trial, "maic", pos)
        w_ma, _ = build_weights(hist, trial, "ma", pos)
    curves = {"unadjusted_km": km,
              "maic_km": weighted_kaplan_meier(hist, w_maic),
              "ma_km": weighted_kaplan_meier(hist, w_ma)}
    rows = []
    for name, curve in curves.items():
        for t, s in zip(times, np.atleast_1d(evaluate(curve, times))):
            rows.append((name, t, float(s)))
        write_curve_csv(curve, out.path(f"{name}_steps.csv"), step_expanded=True)
    for name, w in (("unadjusted_po", uniform_weights(hist.n)), ("maic_po", w_maic), ("ma_po", w_ma)):
        for t, s in estimate_survival_po(hist, w, times):
            rows.append((name, t, s))
    lines = ["curve,time,survival"] + [f"{c},{t!r},{s!r}" for c, t, s in rows]
    out.text("curves.csv", "\n".join(lines) + "\n")
    if not args.no_plots:
        from .plots import plot_curves
        plot_curves({"Unadjusted": curves["unadjusted_km"], "MAIC": curves["maic_km"],
                     "MA": curves["ma_km"]}, out.path("curves.png"), until=max([t_n, *times]))
    print(f"wrote {len(rows)} curve points for {len(times)} time(s)")
    return EXIT_OK


def cmd_weights(args, config, out: Outputs) -> int:
    hist, trial = _load_inputs(args, config)
    method = args.weights or "maic"
    if method == "all":
        raise UsageError("weights command takes a single --weights method")
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        weights, fit = build_weights(hist, trial, method)
    write_weights(weights, out.path("weights.csv"))
    diag = weight_diagnostics(weights)
    if fit is not None:
        diag["outcome_model"] = [float(v) for v in fit.coefficients]
    out.json("weights_diagnostics.json", diag)
    print(f"{method}: ess = {weights.ess:.2f} of n = {weights.n}, "
          f"max |residual| = {diag['max_abs_residual']:.2e}")
    return EXIT_OK


def _scenario_seed(base, index):
    return int(np.random.SeedSequence((int(base), index)).generate_state(1, np.uint64)[0])


def cmd_simulate(args, config, out: Outputs) -> int:
    if args.config is None:
        raise UsageError("--config with a scenario grid is required")
    # validate everything before running anything
    specs = load_grid(args.config)
    has_seed = _grid_has_seeds(config)
    if args.seed is None and not all(has_seed):
        raise UsageError("--seed is required unless every scenario sets its own seed")
    specs = [s if explicit else _with(s, seed=_scenario_seed(args.seed, i))
             for i, (s, explicit) in enumerate(zip(specs, has_seed))]
    if args.replicates:
        specs = [_with(s, replicates=args.replicates) for s in specs]

    results, failures = [], []
    for s in specs:
        try:
            results.append(run_scenario(s, args.threads))
            print(f"done: {s.label()}")
        except CureWeightError as exc:
            failures.append({"scenario": s.label(), "error": type(exc).__name__, "message": str(exc)})
            print(f"failed: {s.label()}: {exc}", file=sys.stderr)
    csv_text, table = render_table(results)
    out.text("results.csv", csv_text)
    out.text("table.txt", table)
    write_replicates_long(results, out.path("replicates.csv"))
    out.json("run.json", {
        "scenarios": [{**vars(r.spec), "q0": r.q0, "censoring_rate": r.censoring_rate,
                       "failures": r.failures, "bias100": r.bias100, "se100": r.se100}
                      for r in results],
        "failed_scenarios": failures,
    })
    if results and not args.no_plots:
        from .plots import plot_bias
        plot_bias(results, out.path("bias.png"))
    if args.survival:
        times = _parse_times(args.times) or list(SURVIVAL_TIMES)
        from .plots import plot_error_boxes
        for i, s in enumerate(specs):
            res = run_survival_scenario(s, times, args.threads)
            rows = res.summary()
            keys = list(rows[0])
            lines = [",".join(keys)] + [",".join(repr(r[k]) if isinstance(r[k], float) else str(r[k])
                                                 for k in keys) for r in rows]
            out.text(f"survival_errors_{i}.csv", "\n".join(lines) + "\n")
            if not args.no_plots:
                plot_error_boxes(res, out.path(f"survival_errors_{i}.png"))
    sys.stdout.write(table)
    return EXIT_COMPUTE if failures else EXIT_OK


def _grid_has_seeds(doc):
    defaults = doc.get("defaults", {}) if isinstance(doc, dict) else {}
    scen = doc.get("scenarios", []) if isinstance(doc, dict) else doc
    return [("seed" in (d or {})) or ("seed" in (defaults or {})) for d in scen]


def _with(spec, **changes):
    return ScenarioSpec(**{**vars(spec), **changes})


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--historical", metavar="PATH", help="historical control CSV")
    common.add_argument("--trial", metavar="PATH", help="trial CSV (covariates used)")
    common.add_argument("--config", metavar="PATH", help="YAML/JSON config")
    common.add_argument("--weights", choices=[*WEIGHT_METHODS, "all"])
    common.add_argument("--estimator", choices=[*ESTIMATORS, "all"], default="all")
    common.add_argument("--bootstrap", type=int, default=0, metavar="N")
    common.add_argument("--ci", type=float, default=0.95, metavar="LEVEL")
    common.add_argument("--seed", type=int, metavar="N")
    common.add_argument("--times", metavar="LIST", help="comma-separated evaluation times")
    common.add_argument("--out", metavar="DIR", required=True)
    common.add_argument("--threads", type=int, default=1, metavar="N")
    common.add_argument("--no-plots", action="store_true", help="skip PNG figures")

    parser = argparse.ArgumentParser(prog="cureweight", description=__doc__.split("\n")[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("estimate", parents=[common], help="cure-rate estimates (optionally bootstrapped)")
    sub.add_parser("curves", parents=[common], help="adjusted and unadjusted survival curves")
    sub.add_parser("weights", parents=[common], help="calibration weights and diagnostics")
    p_sim = sub.add_parser("simulate", parents=[common], help="Monte Carlo scenario grid")
    p_sim.add_argument("--replicates", type=int, metavar="N", help="override replicates per scenario")
    p_sim.add_argument("--survival", action="store_true",
                       help="also run the survival-function error study per scenario")
    return parser


COMMANDS = {"estimate": cmd_estimate, "curves": cmd_curves,
            "weights": cmd_weights, "simulate": cmd_simulate}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        if args.threads < 1:
            raise UsageError("--threads must be at least 1")
        if args.bootstrap < 0:
            raise UsageError("--bootstrap must be non-negative")
        config = _read_config(args.config)
        if args.command != "simulate" and not isinstance(config, dict):
            raise ValidationError("config must be a mapping")
        out = Outputs(args.out)
        return COMMANDS[args.command](args, config, out)
    except (UsageError, *USAGE_ERRORS) as exc:
        return _fail(exc, EXIT_USAGE)
    except CureWeightError as exc:
        return _fail(exc, EXIT_COMPUTE)


if __name__ == "__main__":
    sys.exit(main())
