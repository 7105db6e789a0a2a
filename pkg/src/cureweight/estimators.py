"""Point estimators of the control cure rate and survival function in the
trial population."""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit, logit

from .calibration import OutcomeModelFit
from .cohort import Cohort
from .errors import BoundaryError, EstimationError, ValidationError
from .pseudo import PseudoObservations, pseudo_survival
from .survival import WeightSet, evaluate, last_observed_time, weighted_kaplan_meier


class Method(str, enum.Enum):
    PO = "po"
    POL = "pol"
    KM = "km"
    DIRECT = "direct"


class WeightMethod(str, enum.Enum):
    UNIFORM = "uniform"
    MAIC = "maic"
    MA = "ma"
    MAIC_MA = "maic-ma"
    IPW = "ipw"


def _weight_method(weights):
    if weights is None:
        return WeightMethod.UNIFORM
    try:
        return WeightMethod(weights.method)
    except ValueError:
        return weights.method


@dataclass(frozen=True, eq=False)
class CureRateEstimate:
    value: float
    method: Method
    weight_method: WeightMethod | str
    weights: WeightSet | None = None
    logit_value: float | None = None
    flags: tuple = field(default_factory=tuple)

    @property
    def out_of_range(self) -> bool:
        return not 0.0 <= self.value <= 1.0

    def to_record(self) -> dict:
        wm = self.weight_method.value if isinstance(self.weight_method, WeightMethod) else str(self.weight_method)
        return {
            "method": self.method.value,
            "weight_method": wm,
            "estimate": float(self.value),
            "ess": None if self.weights is None else float(self.weights.ess),
            "flags": list(self.flags),
        }


def _check_lengths(values, weights):
    if len(values) != weights.n:
        raise ValidationError(f"{len(values)} values but {weights.n} weights")


def estimate_cure_po(pos: PseudoObservations, weights: WeightSet) -> CureRateEstimate:
    """Weighted mean of cure-rate pseudo-observations; not restricted to [0, 1]."""
    if not pos.at_last_time:
        raise EstimationError("cure-rate estimate needs pseudo-observations at the last observed time")
    _check_lengths(pos.values, weights)
    value = float(weights.weights @ pos.values)
    flags = ("out_of_range",) if not 0.0 <= value <= 1.0 else ()
    return CureRateEstimate(value, Method.PO, _weight_method(weights), weights, None, flags)


def estimate_cure_pol(pos: PseudoObservations, weights: WeightSet) -> CureRateEstimate:
    """Pseudo-logistic cure estimate ``expit(b)``.

    The intercept-only estimating equation ``sum w_i (Y_i - expit(b)) = 0``
    has the closed-form root ``b = logit(sum w_i Y_i)``.
    """
    if not pos.at_last_time:
        raise EstimationError("cure-rate estimate needs pseudo-observations at the last observed time")
    _check_lengths(pos.values, weights)
    mean = float(weights.weights @ pos.values)
    if not 0.0 < mean < 1.0:
        raise BoundaryError(
            f"weighted pseudo-observation mean {mean:.4g} is outside (0, 1); "
            f"use the PO estimator instead")
    b = float(logit(mean))
    return CureRateEstimate(float(expit(b)), Method.POL, _weight_method(weights), weights, b)


def estimate_survival_po(cohort: Cohort, weights: WeightSet, times) -> list:
    """``[(t, sum_i w_i PO_i(t)), ...]`` for each requested time."""
    _check_lengths(cohort.time, weights)
    out = []
    for t in times:
        pos = pseudo_survival(cohort, float(t))
        out.append((float(t), float(weights.weights @ pos.values)))
    return out


def estimate_survival_km(cohort: Cohort, weights: WeightSet, times) -> list:
    curve = weighted_kaplan_meier(cohort, weights)
    return [(float(t), float(evaluate(curve, float(t)))) for t in times]


def estimate_cure_km(cohort: Cohort, weights: WeightSet) -> CureRateEstimate:
    """Weighted Kaplan-Meier curve evaluated at the last observed time."""
    curve = weighted_kaplan_meier(cohort, weights)
    value = float(evaluate(curve, last_observed_time(cohort)))
    return CureRateEstimate(value, Method.KM, _weight_method(weights), weights)


def estimate_cure_direct(fit: OutcomeModelFit, trial) -> CureRateEstimate:
    """Average predicted cure probability over the trial subjects."""
    if not fit.converged:
        raise EstimationError("outcome model fit did not converge")
    X = trial.covariates if isinstance(trial, Cohort) else np.asarray(trial, dtype=float)
    value = float(np.mean(fit.predict(X)))
    return CureRateEstimate(value, Method.DIRECT, WeightMethod.UNIFORM, None, float(logit(value)))
