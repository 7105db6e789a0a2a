"""Bootstrap intervals and closed-form variance formulas for weighted means.

Resampling covers historical subjects only; the trial side (covariate means
and, for MA variants, trial covariates) is held fixed.

Every replicate draws its indices from its own PCG64 stream spawned from
``numpy.random.SeedSequence(seed)``, so results do not depend on how
replicates are distributed over workers.
"""

from __future__ import annotations

import csv
import enum
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.special import expit, logit

from .cohort import Cohort
from .errors import CureWeightError, InferenceError, ValidationError
from .parallel import ordered_map
from .pipeline import Pipeline
from .survival import WeightSet

MAX_FAILURE_FRACTION = 0.2


class TransformScale(str, enum.Enum):
    IDENTITY = "identity"
    LOGIT = "logit"


@dataclass(frozen=True)
class BootstrapSpec:
    replicates: int = 300
    seed: int = 0
    ci_level: float = 0.95
    transform_scale: TransformScale = TransformScale.IDENTITY

    def __post_init__(self):
        if self.replicates < 2:
            raise ValidationError("at least 2 bootstrap replicates are needed")
        if not 0 < self.ci_level < 1:
            raise ValidationError("ci_level must lie in (0, 1)")
        if not 0 <= int(self.seed) < 2 ** 64:
            raise ValidationError("seed must be an unsigned 64-bit integer")
        object.__setattr__(self, "transform_scale", TransformScale(self.transform_scale))
        if self.replicates < 100:
            warnings.warn(f"{self.replicates} replicates is few for percentile intervals",
                          UserWarning, stacklevel=3)


@dataclass(frozen=True, eq=False)
class IntervalEstimate:
    point: float
    variance: float
    ci_low: float
    ci_high: float
    replicates_used: int
    failures: int
    estimates: np.ndarray = field(repr=False, default=None)

    @property
    def se(self) -> float:
        return float(np.sqrt(self.variance))

    def to_record(self) -> dict:
        return {"point": self.point, "variance": self.variance, "se": self.se,
                "ci_low": self.ci_low, "ci_high": self.ci_high,
                "replicates_used": self.replicates_used, "failures": self.failures}


def _one_replicate(seed_seq, ctx):
    historical, trial, pipeline = ctx
    rng = np.random.Generator(np.random.PCG64(seed_seq))
    idx = rng.integers(0, historical.n, historical.n)
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            return pipeline(historical.subset(idx), trial).value, None
    except CureWeightError as exc:
        return np.nan, type(exc).__name__


def bootstrap_estimate(historical: Cohort, trial, pipeline: Pipeline, spec: BootstrapSpec,
                       threads: int = 1) -> IntervalEstimate:
    """Nonparametric bootstrap of ``pipeline`` over historical subjects.

    Failed replicates (solver errors) are dropped and counted; more than 20%
    failures raise :class:`InferenceError`. On the logit scale, replicate
    estimates outside (0, 1) also count as failures.
    """
    point = pipeline(historical, trial).value
    children = np.random.SeedSequence(int(spec.seed)).spawn(spec.replicates)
    results = ordered_map(_one_replicate, children, threads, (historical, trial, pipeline))

    est = np.array([r[0] for r in results], dtype=float)
    modes = [r[1] for r in results if r[1] is not None]
    logit_scale = spec.transform_scale is TransformScale.LOGIT
    ok = np.isfinite(est)
    if logit_scale:
        bad_range = ok & ~((est > 0) & (est < 1))
        modes += ["out_of_range"] * int(bad_range.sum())
        ok &= ~bad_range
    failures = int(spec.replicates - ok.sum())
    if failures > MAX_FAILURE_FRACTION * spec.replicates:
        counts = {m: modes.count(m) for m in sorted(set(modes))}
        raise InferenceError(f"{failures} of {spec.replicates} bootstrap replicates failed: {counts}")
    good = est[ok]
    if len(good) < 2:
        raise InferenceError("fewer than 2 successful bootstrap replicates")
    variance = float(np.var(good, ddof=1))
    alpha = (1 - spec.ci_level) / 2
    if logit_scale:
        lo, hi = np.quantile(logit(good), [alpha, 1 - alpha])
        lo, hi = float(expit(lo)), float(expit(hi))
    else:
        lo, hi = (float(v) for v in np.quantile(good, [alpha, 1 - alpha]))
    return IntervalEstimate(float(point), variance, lo, hi, int(len(good)), failures, est)


def write_replicates(interval: IntervalEstimate, path) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["replicate", "estimate"])
        for i, v in enumerate(interval.estimates):
            w.writerow([i, "" if not np.isfinite(v) else repr(float(v))])


def _weights_vector(weights):
    return np.asarray(weights.weights if isinstance(weights, WeightSet) else weights, dtype=float)


def variance_naive(values, weights, mu_hat: float) -> float:
    """``sum_i w_i^2 (Y_i - mu_hat)^2``; tends to be conservative."""
    y = np.asarray(values, dtype=float)
    w = _weights_vector(weights)
    if len(y) != len(w):
        raise ValidationError(f"{len(y)} values but {len(w)} weights")
    return float(np.sum(w ** 2 * (y - mu_hat) ** 2))


def variance_survey(values, weights, fitted) -> float:
    """``sum_i w_i^2 (Y_i - m_i)^2`` with ``m_i`` from a fitted outcome model."""
    y = np.asarray(values, dtype=float)
    w = _weights_vector(weights)
    m = np.broadcast_to(np.asarray(fitted, dtype=float), y.shape) if np.ndim(fitted) == 0 else np.asarray(fitted, dtype=float)
    if not len(y) == len(w) == len(m):
        raise ValidationError("values, weights and fitted values differ in length")
    return float(np.sum(w ** 2 * (y - m) ** 2))
