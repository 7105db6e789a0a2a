"""Chains pseudo-observations, weights and an estimator into one call.

Used by the bootstrap and the CLI so both run exactly the same steps.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .calibration import (
    CalibrationWarning,
    EntropyDualProblem,
    fit_pseudo_logistic,
    ipw_weights,
    ma_balance_design,
    maic_ma_design,
    solve_entropy_weights,
)
from .cohort import Cohort, CovariateTarget
from .errors import ValidationError
from .estimators import (
    CureRateEstimate,
    estimate_cure_direct,
    estimate_cure_km,
    estimate_cure_po,
    estimate_cure_pol,
)
from .pseudo import FollowUpWarning, PseudoObservations, pseudo_cure
from .survival import uniform_weights

WEIGHT_METHODS = ("none", "maic", "ma", "maic-ma", "ipw")
ESTIMATORS = ("po", "pol", "km", "direct")


def trial_covariates(trial):
    if isinstance(trial, Cohort):
        return trial.covariates
    if isinstance(trial, CovariateTarget):
        return None
    return np.asarray(trial, dtype=float)


def trial_means(trial):
    if isinstance(trial, CovariateTarget):
        return trial.means
    return trial_covariates(trial).mean(axis=0)


def build_weights(historical: Cohort, trial, weight_method: str,
                  pos: PseudoObservations | None = None, tol: float = 1e-8,
                  max_iter: int = 300) -> tuple:
    """Weights for ``historical`` adjusted towards ``trial``.

    ``trial`` may be a Cohort, a covariate matrix, or a CovariateTarget (the
    latter only for ``"none"`` and ``"maic"``). Returns ``(WeightSet, fit)``
    where ``fit`` is the outcome model used by MA variants, else None.
    """
    if weight_method not in WEIGHT_METHODS:
        raise ValidationError(f"unknown weight method {weight_method!r}")
    if weight_method == "none":
        return uniform_weights(historical.n), None
    if weight_method == "maic":
        problem = EntropyDualProblem(historical.covariates, trial_means(trial), tol, max_iter,
                                     historical.covariate_names)
        return solve_entropy_weights(problem, "maic"), None
    Xt = trial_covariates(trial)
    if Xt is None:
        raise ValidationError(f"weight method {weight_method!r} needs trial subject covariates")
    if weight_method == "ipw":
        return ipw_weights(historical, Xt), None
    if pos is None:
        pos = pseudo_cure(historical, warn=False)
    fit = fit_pseudo_logistic(pos, historical)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", CalibrationWarning)
        if weight_method == "ma":
            problem = ma_balance_design(fit, historical, Xt, tol, max_iter)
        else:
            problem = maic_ma_design(fit, historical, Xt, tol, max_iter)
        return solve_entropy_weights(problem, weight_method), fit


@dataclass(frozen=True)
class Pipeline:
    """One cure-rate estimator: a weighting scheme plus an estimator."""

    weight_method: str = "maic"
    estimator: str = "po"

    def __post_init__(self):
        if self.weight_method not in WEIGHT_METHODS:
            raise ValidationError(f"unknown weight method {self.weight_method!r}")
        if self.estimator not in ESTIMATORS:
            raise ValidationError(f"unknown estimator {self.estimator!r}")

    def __call__(self, historical: Cohort, trial) -> CureRateEstimate:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", FollowUpWarning)
            pos = pseudo_cure(historical, warn=False)
        if self.estimator == "direct":
            Xt = trial_covariates(trial)
            if Xt is None:
                raise ValidationError("direct adjustment needs trial subject covariates")
            return estimate_cure_direct(fit_pseudo_logistic(pos, historical), Xt)
        weights, _ = build_weights(historical, trial, self.weight_method, pos)
        if self.estimator == "po":
            return estimate_cure_po(pos, weights)
        if self.estimator == "pol":
            return estimate_cure_pol(pos, weights)
        return estimate_cure_km(historical, weights)
