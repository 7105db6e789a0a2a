"""Product-limit estimation, plain and weighted.

Both estimators share one code path: :func:`kaplan_meier` feeds unit
weights and :func:`weighted_kaplan_meier` feeds ``w / max(w)``. Uniform
weights therefore reproduce the unweighted curve bit for bit, and any
positive rescaling of the weights leaves the curve unchanged.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .cohort import Cohort
from .errors import EstimationError, ValidationError

WEIGHT_SUM_TOL = 1e-12


@dataclass(frozen=True, eq=False)
class SurvivalCurve:
    """Right-continuous step function.

    ``probs[j]`` is the survival probability on ``[times[j], times[j+1])``;
    the curve equals 1 before ``times[0]``.
    """

    times: np.ndarray
    probs: np.ndarray
    n_at_risk: np.ndarray | None = None
    n_events: np.ndarray | None = None
    weighted: bool = False

    def __call__(self, t):
        return evaluate(self, t)


@dataclass(frozen=True, eq=False)
class WeightSet:
    """Normalised subject weights plus the solver diagnostics that produced them."""

    weights: np.ndarray
    dual_coefficients: np.ndarray
    balance_residuals: np.ndarray
    ess: float
    method: str = "uniform"
    iterations: int = 0

    def __post_init__(self):
        w = np.array(self.weights, dtype=float)
        w.setflags(write=False)
        if w.ndim != 1 or len(w) == 0:
            raise ValidationError("weights must be a non-empty vector")
        if not np.all(w > 0) or not np.all(np.isfinite(w)):
            raise ValidationError("weights must be finite and strictly positive")
        if abs(w.sum() - 1.0) > WEIGHT_SUM_TOL:
            raise ValidationError(f"weights sum to {w.sum()!r}, not 1")
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "dual_coefficients", np.atleast_1d(np.asarray(self.dual_coefficients, float)))
        object.__setattr__(self, "balance_residuals", np.atleast_1d(np.asarray(self.balance_residuals, float)))

    @classmethod
    def from_raw(cls, raw, method="custom", dual_coefficients=(), balance_residuals=(),
                 iterations=0) -> "WeightSet":
        """Normalise positive ``raw`` weights to sum to one."""
        raw = np.asarray(raw, dtype=float)
        if raw.ndim != 1 or len(raw) == 0 or not np.all(raw > 0) or not np.all(np.isfinite(raw)):
            raise ValidationError("raw weights must be finite and strictly positive")
        w = raw / raw.sum()
        # one correction pass keeps the sum within 1e-12 for large n
        w = w / w.sum()
        return cls(w, dual_coefficients, balance_residuals, effective_sample_size(w),
                   method, iterations)

    @property
    def n(self) -> int:
        return len(self.weights)


def uniform_weights(n: int) -> WeightSet:
    return WeightSet.from_raw(np.ones(n), method="uniform")


def effective_sample_size(weights) -> float:
    w = np.asarray(weights, dtype=float)
    return float(w.sum() ** 2 / np.dot(w, w))


def _product_limit(time, event, w):
    order = np.argsort(time, kind="stable")
    t = time[order]
    e = event[order]
    ws = w[order]
    uniq, first = np.unique(t, return_index=True)
    risk = np.cumsum(ws[::-1])[::-1][first]
    d_w = np.add.reduceat(ws * e, first)
    d_n = np.add.reduceat(e.astype(np.int64), first)
    n_risk = (len(t) - first).astype(np.int64)
    has_event = d_n > 0
    if np.any(risk[has_event] <= 0):
        bad = uniq[has_event][risk[has_event] <= 0][0]
        raise EstimationError(f"zero weighted risk set at event time {bad}")
    r = risk[has_event]
    factors = np.maximum(1.0 - d_w[has_event] / r, 0.0)
    probs = np.cumprod(factors)
    return uniq[has_event], probs, n_risk[has_event], d_n[has_event]


def kaplan_meier(cohort: Cohort) -> SurvivalCurve:
    """Standard product-limit estimate.

    Events at a tied time are grouped; subjects censored at an event time
    are still in that time's risk set.
    """
    w = np.ones(cohort.n)
    times, probs, n_risk, n_ev = _product_limit(cohort.time, cohort.event, w)
    return SurvivalCurve(times, probs, n_risk, n_ev, weighted=False)


def weighted_kaplan_meier(cohort: Cohort, weights: WeightSet) -> SurvivalCurve:
    """Product-limit estimate with subject weights.

    The conditional survival at event time ``t_j`` is
    ``1 - sum(w_i, events at t_j) / sum(w_i, T_i >= t_j)``, i.e. the
    denominator is the weighted risk set.
    """
    w = np.asarray(weights.weights if isinstance(weights, WeightSet) else weights, dtype=float)
    if len(w) != cohort.n:
        raise ValidationError(f"{len(w)} weights for a cohort of {cohort.n}")
    times, probs, n_risk, n_ev = _product_limit(cohort.time, cohort.event, w / w.max())
    return SurvivalCurve(times, probs, n_risk, n_ev, weighted=True)


def last_observed_time(cohort: Cohort) -> float:
    """Largest observed time, event or censored."""
    return float(cohort.time.max())


def evaluate(curve: SurvivalCurve, t):
    """Evaluate the step function at ``t`` (scalar or array)."""
    t_arr = np.asarray(t, dtype=float)
    if np.any(t_arr < 0):
        raise ValidationError("evaluation time must be non-negative")
    idx = np.searchsorted(curve.times, t_arr, side="right")
    padded = np.concatenate(([1.0], curve.probs))
    out = padded[idx]
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class PlateauReport:
    window_start: float
    last_event_time: float | None
    last_observed_time: float
    n_events: int
    late_events: int
    censored_after_last_event: int
    sufficient_follow_up: bool

    def __str__(self):
        if self.n_events == 0:
            return "no events observed; curve is flat at 1"
        verdict = "flat tail" if self.sufficient_follow_up else "no flat tail"
        return (f"{verdict}: {self.late_events} event(s) after t={self.window_start:.4g}, "
                f"{self.censored_after_last_event} censored after last event "
                f"t={self.last_event_time:.4g} (follow-up to {self.last_observed_time:.4g})")


def plateau_diagnostic(curve: SurvivalCurve, cohort: Cohort, window_fraction: float = 0.1) -> PlateauReport:
    """Heuristic check for sufficient follow-up.

    Follow-up is judged sufficient when no event falls in the last
    ``window_fraction`` of ``[0, T_n]``. Advisory only.
    """
    if not 0 < window_fraction < 1:
        raise ValidationError("window_fraction must lie in (0, 1)")
    t_n = last_observed_time(cohort)
    start = t_n * (1.0 - window_fraction)
    ev_times = cohort.time[cohort.event]
    n_events = int(len(ev_times))
    if n_events == 0:
        return PlateauReport(start, None, t_n, 0, 0, int(cohort.n), True)
    last_event = float(curve.times[-1]) if len(curve.times) else float(ev_times.max())
    late = int(np.sum(ev_times > start))
    cens_after = int(np.sum(~cohort.event & (cohort.time > last_event)))
    return PlateauReport(start, last_event, t_n, n_events, late, cens_after, late == 0)


def write_curve_csv(curve: SurvivalCurve, path, step_expanded: bool = False) -> None:
    """Two-column ``time,survival`` export.

    With ``step_expanded`` each jump is written as two points (value before
    and after), starting from ``(0, 1)``, which plotting tools draw directly.
    """
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["time", "survival"])
        if step_expanded:
            prev = 1.0
            w.writerow([0.0, 1.0])
            for t, s in zip(curve.times, curve.probs):
                w.writerow([repr(float(t)), repr(prev)])
                w.writerow([repr(float(t)), repr(float(s))])
                prev = float(s)
        else:
            for t, s in zip(curve.times, curve.probs):
                w.writerow([repr(float(t)), repr(float(s))])
