"""Jackknife pseudo-observations of the survival function.

For subject ``i`` the pseudo-observation at time ``t`` is
``n * S(t) - (n - 1) * S_{-i}(t)`` where ``S_{-i}`` is the Kaplan-Meier
estimate without subject ``i``. Evaluated at the last observed time these
serve as per-subject cure-rate responses.

:func:`pseudo_survival` uses a single pass over the event times;
:func:`pseudo_survival_naive` refits the Kaplan-Meier curve ``n + 1`` times
and is kept as the reference the fast path is tested against.
"""

from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .cohort import Cohort
from .errors import JackknifeError
from .survival import evaluate, kaplan_meier, last_observed_time, plateau_diagnostic


class FollowUpWarning(UserWarning):
    """The survival curve shows no plateau; cure-rate pseudo-observations may be biased."""


@dataclass(frozen=True, eq=False)
class PseudoObservations:
    values: np.ndarray
    eval_time: float
    at_last_time: bool = False

    def __len__(self):
        return len(self.values)

    def mean(self) -> float:
        return float(np.mean(self.values))


def _check_n(cohort):
    if cohort.n < 2:
        raise JackknifeError(f"pseudo-observations need n >= 2, got n = {cohort.n}")


def _leave_one_out_survival(time, event, t):
    """S_{-i}(t) for every i, plus the full-sample S(t)."""
    n = len(time)
    et = np.unique(time[event & (time <= t)])
    m = len(et)
    if m == 0:
        return np.ones(n), 1.0
    sorted_t = np.sort(time)
    r = (n - np.searchsorted(sorted_t, et, side="left")).astype(np.int64)
    sorted_ev = np.sort(time[event])
    d = (np.searchsorted(sorted_ev, et, side="right")
         - np.searchsorted(sorted_ev, et, side="left")).astype(np.int64)

    full_factors = 1.0 - d / r
    full = np.cumprod(full_factors)[-1]

    # factors with subject i removed from the risk set (i survives t_j)
    rm1 = r - 1
    with np.errstate(divide="ignore", invalid="ignore"):
        reduced = np.where(rm1 > 0, 1.0 - d / np.maximum(rm1, 1), 1.0)
        # subject i is one of the deaths at t_j
        own_death = np.where(rm1 > 0, 1.0 - (d - 1) / np.maximum(rm1, 1), 1.0)

    prefix = np.concatenate(([1.0], np.cumprod(reduced)))          # prod_{l<k} reduced
    suffix = np.concatenate((np.cumprod(full_factors[::-1])[::-1], [1.0]))  # prod_{l>=k} full

    k = np.searchsorted(et, time, side="left")
    kc = np.minimum(k, m - 1)
    at_event_time = (k < m) & (et[kc] == time)
    special = np.where(event, own_death[kc], reduced[kc])
    loo = np.where(
        at_event_time,
        prefix[k] * special * suffix[np.minimum(k + 1, m)],
        prefix[k] * suffix[k],
    )
    return loo, full


def pseudo_survival(cohort: Cohort, t: float) -> PseudoObservations:
    """Pseudo-observations of S(t) for every subject, in cohort order.

    Values are not clipped to [0, 1].
    """
    _check_n(cohort)
    n = cohort.n
    t = float(t)
    if not np.any(~cohort.event & (cohort.time < t)):
        # no censoring before t: KM is the empirical survivor function with or
        # without any one subject, so the jackknife collapses to the indicator
        # of no event by t; returning it directly avoids rounding
        return PseudoObservations(1.0 - (cohort.event & (cohort.time <= t)), t, False)
    loo, full = _leave_one_out_survival(cohort.time, cohort.event, t)
    values = n * full - (n - 1) * loo
    return PseudoObservations(values, t, False)


def pseudo_survival_naive(cohort: Cohort, t: float) -> PseudoObservations:
    """Reference implementation: ``n + 1`` full Kaplan-Meier fits."""
    _check_n(cohort)
    n = cohort.n
    full = evaluate(kaplan_meier(cohort), t)
    values = np.empty(n)
    keep = np.ones(n, dtype=bool)
    for i in range(n):
        keep[i] = False
        values[i] = n * full - (n - 1) * evaluate(kaplan_meier(cohort.subset(keep)), t)
        keep[i] = True
    return PseudoObservations(values, float(t), False)


def pseudo_cure(cohort: Cohort, window_fraction: float = 0.1, warn: bool = True) -> PseudoObservations:
    """Cure-rate pseudo-observations: pseudo_survival at the last observed time.

    Emits :class:`FollowUpWarning` when the curve has events in its final
    ``window_fraction`` of follow-up.
    """
    _check_n(cohort)
    t_n = last_observed_time(cohort)
    if warn:
        report = plateau_diagnostic(kaplan_meier(cohort), cohort, window_fraction)
        if not report.sufficient_follow_up:
            warnings.warn(str(report), FollowUpWarning, stacklevel=2)
    po = pseudo_survival(cohort, t_n)
    return PseudoObservations(po.values, t_n, True)


def write_pseudo_csv(pos: PseudoObservations, path) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["subject", "pseudo_value"])
        for i, v in enumerate(pos.values):
            w.writerow([i, repr(float(v))])
