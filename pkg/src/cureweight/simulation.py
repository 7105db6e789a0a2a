"""Monte Carlo harness for the cure-rate and survival-function estimators.

Data model, per subject:

* covariates ``X ~ Normal(mean_shift, I_p)``; historical controls use mean 0,
  the trial population mean ``b * 1``;
* cured with probability ``expit(a * sum(X))`` (cured subjects never fail);
* otherwise Weibull event time with scale ``exp(3 + g * sum(X))``;
* exponential censoring with scale ``exp(censor_log_scale)``.

Each scenario spawns ``replicates + 1`` independent PCG64 streams from its
seed: stream 0 draws the 100000-subject trial truth sample, stream ``r + 1``
drives replicate ``r``.
"""

from __future__ import annotations

import csv
import io
import warnings
from dataclasses import dataclass, fields
from pathlib import Path

import numpy as np
import yaml
from scipy.special import expit

from .calibration import (
    CalibrationWarning,
    EntropyDualProblem,
    fit_pseudo_logistic,
    ipw_weights,
    ma_balance_design,
    maic_ma_design,
    solve_entropy_weights,
)
from .cohort import Cohort
from .errors import CureWeightError, ValidationError
from .parallel import ordered_map
from .pseudo import pseudo_survival
from .survival import evaluate, kaplan_meier, weighted_kaplan_meier

CURE_ESTIMATORS = ("unadj", "maic_po", "ma_po", "maicma_po", "maicma_km")
SURVIVAL_ESTIMATORS = ("unadj_km", "ipw", "maic", "ma")
SURVIVAL_TIMES = (25.0, 50.0, 100.0, 150.0, 250.0, 400.0)
MAX_FAILURE_FRACTION = 0.2


class SimulationError(CureWeightError):
    pass


@dataclass(frozen=True)
class ScenarioSpec:
    n: int = 200
    p: int = 3
    a: float = 0.7
    g: float = -0.3
    b: float = 0.5
    shape: float = 1.0
    censor_log_scale: float = 5.5
    truth_n: int = 100_000
    replicates: int = 2000
    seed: int = 0
    # False reads expit(a * sum X) as the probability of NOT being cured
    expit_is_cure: bool = True

    def __post_init__(self):
        if self.n < 2:
            raise ValidationError("n must be at least 2")
        if self.p < 1:
            raise ValidationError("p must be at least 1")
        if not self.shape > 0:
            raise ValidationError("shape must be positive")
        if self.replicates < 1:
            raise ValidationError("replicates must be at least 1")
        if self.truth_n < 1:
            raise ValidationError("truth_n must be positive")

    @classmethod
    def from_mapping(cls, mapping: dict) -> "ScenarioSpec":
        known = {f.name: f.type for f in fields(cls)}
        unknown = set(mapping) - set(known)
        if unknown:
            raise ValidationError(f"unknown scenario field(s): {', '.join(sorted(unknown))}")
        kw = {}
        for f in fields(cls):
            if f.name not in mapping:
                continue
            v = mapping[f.name]
            try:
                if f.name in ("n", "p", "truth_n", "replicates", "seed"):
                    if isinstance(v, bool) or float(v) != int(v):
                        raise ValueError
                    v = int(v)
                elif f.name == "expit_is_cure":
                    if not isinstance(v, bool):
                        raise ValueError
                else:
                    v = float(v)
            except (TypeError, ValueError):
                raise ValidationError(f"scenario field {f.name!r} has invalid value {v!r}") from None
            kw[f.name] = v
        return cls(**kw)

    def label(self) -> str:
        return f"n={self.n} a={self.a:g} g={self.g:g} p={self.p} shape={self.shape:g}"


def weibull_time(linear_predictor, u, shape):
    """Inverse-CDF Weibull draw: ``exp(3 + lp) * (-log u) ** (1 / shape)``."""
    return np.exp(3.0 + np.asarray(linear_predictor, dtype=float)) * (-np.log(u)) ** (1.0 / shape)


@dataclass(frozen=True, eq=False)
class SimulatedCohort:
    cohort: Cohort
    cured: np.ndarray
    latent_time: np.ndarray


def cure_probability(X, spec: ScenarioSpec) -> np.ndarray:
    eta = spec.a * np.asarray(X).sum(axis=1)
    return expit(eta) if spec.expit_is_cure else expit(-eta)


def generate_covariates(rng, n, mean_shift, spec):
    return rng.normal(loc=mean_shift, scale=1.0, size=(n, spec.p))


def generate_cohort(rng: np.random.Generator, n: int, mean_shift, spec: ScenarioSpec,
                    label: str = "historical") -> SimulatedCohort:
    X = generate_covariates(rng, n, mean_shift, spec)
    cured = rng.random(n) < cure_probability(X, spec)
    u = 1.0 - rng.random(n)
    latent = weibull_time(spec.g * X.sum(axis=1), u, spec.shape)
    latent[cured] = np.inf
    censor = rng.exponential(np.exp(spec.censor_log_scale), n)
    time = np.minimum(latent, censor)
    cohort = Cohort(time, latent <= censor, X, label=label)
    return SimulatedCohort(cohort, cured, latent)


def generate_subject(rng: np.random.Generator, mean_shift, spec: ScenarioSpec):
    """One subject: ``(SubjectRecord, cured, latent_event_time)``."""
    sim = generate_cohort(rng, 1, mean_shift, spec)
    return sim.cohort.records[0], bool(sim.cured[0]), float(sim.latent_time[0])


@dataclass(frozen=True, eq=False)
class TruthSample:
    q0: float
    s0: dict
    covariates: np.ndarray

    @property
    def target_means(self) -> np.ndarray:
        return self.covariates.mean(axis=0)


def compute_truth(spec: ScenarioSpec, rng: np.random.Generator, times=()) -> TruthSample:
    """Approximate trial-population truth from ``spec.truth_n`` subjects.

    ``q0`` averages the latent cure probabilities; ``S0(t)`` is the share of
    latent (uncensored) event times beyond ``t``.
    """
    if spec.truth_n < 10_000:
        warnings.warn("truth_n below 10000 gives a noisy truth", UserWarning, stacklevel=2)
    sim = generate_cohort(rng, spec.truth_n, spec.b, spec, label="trial")
    X = sim.cohort.covariates
    q0 = float(cure_probability(X, spec).mean())
    s0 = {float(t): float(np.mean(sim.latent_time > t)) for t in times}
    return TruthSample(q0, s0, X)


def _streams(spec):
    children = np.random.SeedSequence(int(spec.seed)).spawn(spec.replicates + 1)
    return children[0], children[1:]


def _solve_quiet(problem, method):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", CalibrationWarning)
        return solve_entropy_weights(problem, method)


def _cure_replicate(seed_seq, ctx):
    spec, target_means, trial_X = ctx
    rng = np.random.Generator(np.random.PCG64(seed_seq))
    sim = generate_cohort(rng, spec.n, 0.0, spec)
    hist = sim.cohort
    out = dict.fromkeys(CURE_ESTIMATORS, np.nan)
    fails = dict.fromkeys(CURE_ESTIMATORS, 0)
    t_n = float(hist.time.max())
    y = pseudo_survival(hist, t_n).values
    out["unadj"] = float(y.mean())

    def attempt(name, fn):
        try:
            out[name] = float(fn())
        except CureWeightError:
            fails[name] = 1

    attempt("maic_po", lambda: _solve_quiet(
        EntropyDualProblem(hist.covariates, target_means), "maic").weights @ y)
    fit = None
    try:
        fit = fit_pseudo_logistic(y, hist)
    except CureWeightError:
        pass
    if fit is None:
        for name in ("ma_po", "maicma_po", "maicma_km"):
            fails[name] = 1
    else:
        attempt("ma_po", lambda: _solve_quiet(
            ma_balance_design(fit, hist, trial_X), "ma").weights @ y)
        try:
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", CalibrationWarning)
                w = _solve_quiet(maic_ma_design(fit, hist, trial_X), "maic-ma")
            out["maicma_po"] = float(w.weights @ y)
            out["maicma_km"] = float(evaluate(weighted_kaplan_meier(hist, w), t_n))
        except CureWeightError:
            fails["maicma_po"] = fails["maicma_km"] = 1
    censored = float(1.0 - hist.event.mean())
    return out, fails, censored


@dataclass(frozen=True, eq=False)
class ScenarioResult:
    spec: ScenarioSpec
    q0: float
    estimates: np.ndarray            # (replicates, len(CURE_ESTIMATORS)), NaN = failure
    failures: dict
    censoring_rate: float

    @property
    def bias100(self) -> dict:
        return {k: float(100 * (np.nanmean(self.estimates[:, j]) - self.q0))
                for j, k in enumerate(CURE_ESTIMATORS)}

    @property
    def se100(self) -> dict:
        return {k: float(100 * np.nanstd(self.estimates[:, j], ddof=1))
                for j, k in enumerate(CURE_ESTIMATORS)}


def run_scenario(spec: ScenarioSpec, threads: int = 1) -> ScenarioResult:
    """Bias and SE of the cure-rate estimators over ``spec.replicates`` runs.

    Raises :class:`SimulationError` when any estimator fails in more than 20%
    of replicates.
    """
    truth_seq, rep_seqs = _streams(spec)
    truth = compute_truth(spec, np.random.Generator(np.random.PCG64(truth_seq)))
    target = truth.target_means
    results = ordered_map(_cure_replicate, rep_seqs, threads, (spec, target, truth.covariates))
    est = np.array([[r[0][k] for k in CURE_ESTIMATORS] for r in results])
    failures = {k: int(sum(r[1][k] for r in results)) for k in CURE_ESTIMATORS}
    bad = {k: v for k, v in failures.items() if v > MAX_FAILURE_FRACTION * spec.replicates}
    if bad:
        raise SimulationError(f"{spec.label()}: too many failed replicates {bad}")
    cens = float(np.mean([r[2] for r in results]))
    return ScenarioResult(spec, truth.q0, est, failures, cens)


def _survival_replicate(seed_seq, ctx):
    spec, times, target_means, truth_X = ctx
    rng = np.random.Generator(np.random.PCG64(seed_seq))
    hist = generate_cohort(rng, spec.n, 0.0, spec).cohort
    trial_sample = generate_covariates(rng, spec.n, spec.b, spec)
    err = np.full((len(SURVIVAL_ESTIMATORS), len(times)), np.nan)
    km = kaplan_meier(hist)
    err[0] = evaluate(km, np.asarray(times))
    weights = {}
    try:
        weights["ipw"] = ipw_weights(hist, trial_sample)
    except CureWeightError:
        pass
    try:
        weights["maic"] = _solve_quiet(EntropyDualProblem(hist.covariates, target_means), "maic")
    except CureWeightError:
        pass
    for j, t in enumerate(times):
        y = pseudo_survival(hist, t).values
        for name in ("ipw", "maic"):
            if name in weights:
                err[SURVIVAL_ESTIMATORS.index(name), j] = weights[name].weights @ y
        try:
            fit = fit_pseudo_logistic(y, hist)
            w = _solve_quiet(ma_balance_design(fit, hist, truth_X), "ma")
            err[3, j] = w.weights @ y
        except CureWeightError:
            pass
    return err


@dataclass(frozen=True, eq=False)
class SurvivalScenarioResult:
    spec: ScenarioSpec
    times: tuple
    truth: dict
    errors: np.ndarray               # (replicates, estimators, times): estimate - truth

    def summary(self) -> list:
        """Quantile summary rows, one per (estimator, time)."""
        rows = []
        for i, name in enumerate(SURVIVAL_ESTIMATORS):
            for j, t in enumerate(self.times):
                e = self.errors[:, i, j]
                e = e[np.isfinite(e)]
                q = np.quantile(e, [0.05, 0.25, 0.5, 0.75, 0.95]) if len(e) else [np.nan] * 5
                rows.append({
                    "estimator": name, "time": t, "truth": self.truth[t],
                    "mean": float(np.mean(e)) if len(e) else np.nan,
                    "variance": float(np.var(e, ddof=1)) if len(e) > 1 else np.nan,
                    "q05": q[0], "q25": q[1], "median": q[2], "q75": q[3], "q95": q[4],
                    "failures": int(self.errors.shape[0] - len(e)),
                })
        return rows

    def median_error(self, estimator: str) -> np.ndarray:
        i = SURVIVAL_ESTIMATORS.index(estimator)
        return np.nanmedian(self.errors[:, i, :], axis=0)

    def error_variance(self, estimator: str) -> np.ndarray:
        i = SURVIVAL_ESTIMATORS.index(estimator)
        return np.nanvar(self.errors[:, i, :], axis=0, ddof=1)


def run_survival_scenario(spec: ScenarioSpec, times=SURVIVAL_TIMES, threads: int = 1) -> SurvivalScenarioResult:
    """Errors of survival-function estimators at ``times``.

    Unadjusted Kaplan-Meier plus PO-based estimators under IPW, MAIC and MA
    weights. IPW needs individual trial data, so each replicate also draws
    ``spec.n`` trial subjects for the membership model.
    """
    times = tuple(float(t) for t in times)
    truth_seq, rep_seqs = _streams(spec)
    truth = compute_truth(spec, np.random.Generator(np.random.PCG64(truth_seq)), times)
    ctx = (spec, times, truth.target_means, truth.covariates)
    est = np.array(ordered_map(_survival_replicate, rep_seqs, threads, ctx))
    errors = est - np.array([truth.s0[t] for t in times])[None, None, :]
    return SurvivalScenarioResult(spec, times, truth.s0, errors)


TABLE_COLUMNS = (
    ("n", "n"), ("a", "a"), ("g", "g"), ("p", "p"), ("shape", "shape"),
    ("bias_unadj", "Unadj"), ("bias_maic_po", "MAIC PO"), ("bias_ma_po", "MA PO"),
    ("bias_maicma_po", "MAIC+MA PO"), ("bias_maicma_km", "MAIC+MA KM"),
    ("se_maic_po", "SE MAIC PO"), ("se_ma_po", "SE MA PO"),
    ("se_maicma_po", "SE MAIC+MA PO"), ("se_maicma_km", "SE MAIC+MA KM"),
)


def table_rows(results) -> list:
    rows = []
    for r in results:
        s = r.spec
        row = {"n": str(s.n), "a": f"{s.a:.2f}", "g": f"{s.g:.1f}", "p": str(s.p), "shape": f"{s.shape:g}"}
        bias, se = r.bias100, r.se100
        for k in CURE_ESTIMATORS:
            row[f"bias_{k}"] = f"{bias[k]:.1f}"
            if k != "unadj":
                row[f"se_{k}"] = f"{se[k]:.1f}"
        rows.append(row)
    return rows


def render_table(results) -> tuple:
    """``(csv_text, aligned_text)``: bias x100 and SE x100, one row per scenario.

    Rows follow the order of ``results``.
    """
    rows = table_rows(results)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow([k for k, _ in TABLE_COLUMNS])
    for row in rows:
        w.writerow([row[k] for k, _ in TABLE_COLUMNS])
    headers = [h for _, h in TABLE_COLUMNS]
    widths = [max([len(h)] + [len(row[k]) for row in rows]) for (k, _), h in zip(TABLE_COLUMNS, headers)]
    lines = ["  ".join(h.rjust(wd) for h, wd in zip(headers, widths))]
    lines.append("  ".join("-" * wd for wd in widths))
    for row in rows:
        lines.append("  ".join(row[k].rjust(wd) for (k, _), wd in zip(TABLE_COLUMNS, widths)))
    return buf.getvalue(), "\n".join(lines) + "\n"


def write_replicates_long(results, path) -> None:
    """Long-format per-replicate estimates for external plotting."""
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["scenario", "replicate", "estimator", "estimate", "truth"])
        for si, r in enumerate(results):
            for rep in range(r.estimates.shape[0]):
                for j, k in enumerate(CURE_ESTIMATORS):
                    v = r.estimates[rep, j]
                    w.writerow([si, rep, k, "" if not np.isfinite(v) else repr(float(v)), repr(r.q0)])


def load_grid(path) -> list:
    """Read scenarios from a YAML/JSON file.

    Either a list of scenario mappings or ``{"defaults": {...}, "scenarios": [...]}``.
    All scenarios are validated before anything runs.
    """
    try:
        doc = yaml.safe_load(Path(path).read_text(encoding="utf-8"))
    except yaml.YAMLError as exc:
        raise ValidationError(f"{path}: not valid YAML/JSON: {exc}") from None
    defaults = {}
    if isinstance(doc, dict):
        defaults = doc.get("defaults") or {}
        doc = doc.get("scenarios")
    if not isinstance(doc, list) or not doc or not all(isinstance(d, dict) for d in doc):
        raise ValidationError(f"{path}: expected a non-empty list of scenarios")
    if not isinstance(defaults, dict):
        raise ValidationError(f"{path}: 'defaults' must be a mapping")
    return [ScenarioSpec.from_mapping({**defaults, **d}) for d in doc]
