import numpy as np
import pytest
from conftest import make_cohort
from scipy.special import logit

from cureweight.calibration import OutcomeModelFit, fit_pseudo_logistic
from cureweight.errors import BoundaryError, EstimationError
from cureweight.estimators import (
    Method,
    WeightMethod,
    estimate_cure_direct,
    estimate_cure_km,
    estimate_cure_po,
    estimate_cure_pol,
    estimate_survival_km,
    estimate_survival_po,
)
from cureweight.pipeline import build_weights
from cureweight.pseudo import PseudoObservations, pseudo_cure, pseudo_survival
from cureweight.survival import WeightSet, evaluate, kaplan_meier, uniform_weights


def _pos(values):
    return PseudoObservations(np.asarray(values, dtype=float), 10.0, True)


def test_po_uniform_mean():
    est = estimate_cure_po(_pos([0.2, 0.4]), uniform_weights(2))
    assert est.value == pytest.approx(0.3)
    assert est.method is Method.PO and est.weight_method is WeightMethod.UNIFORM


def test_po_point_mass():
    w = WeightSet.from_raw([1.0, 1e-12, 1e-12])
    assert estimate_cure_po(_pos([0.7, 0.1, 0.2]), w).value == pytest.approx(0.7, abs=1e-11)


def test_po_negative_value_is_flagged_not_clipped():
    c = make_cohort([1, 2, 3, 4, 5], [1, 0, 1, 0, 1])
    pos = pseudo_survival(c, 5.0)
    assert pos.values.min() < 0
    raw = np.where(pos.values < 0, 1.0, 1e-6)
    est = estimate_cure_po(PseudoObservations(pos.values, 5.0, True), WeightSet.from_raw(raw))
    assert est.value < 0
    assert est.out_of_range and "out_of_range" in est.flags


def test_po_requires_last_time_observations():
    with pytest.raises(EstimationError):
        estimate_cure_po(PseudoObservations(np.zeros(2), 1.0, False), uniform_weights(2))


def test_pol_recovers_mean():
    values = np.array([1.0] * 16 + [0.0] * 9)
    est = estimate_cure_pol(_pos(values), uniform_weights(25))
    assert est.value == pytest.approx(0.64, abs=1e-12)
    assert est.logit_value == pytest.approx(0.5754, abs=1e-4)


def test_pol_boundary():
    with pytest.raises(BoundaryError):
        estimate_cure_pol(_pos([-0.04, 0.0]), uniform_weights(2))


def test_pol_symmetric_mean_is_zero():
    assert estimate_cure_pol(_pos([0.2, 0.8]), uniform_weights(2)).logit_value == 0.0


def test_pol_equals_po_inside_unit_interval(shifted_pair):
    hist, trial = shifted_pair
    pos = pseudo_cure(hist, warn=False)
    for method in ("none", "maic", "ma", "maic-ma", "ipw"):
        w, _ = build_weights(hist, trial, method, pos)
        a, b = estimate_cure_po(pos, w).value, estimate_cure_pol(pos, w).value
        assert abs(a - b) < 1e-12


def test_survival_po_no_censoring_is_empirical(rng):
    c = make_cohort(rng.exponential(size=40), np.ones(40))
    times = [0.1, 0.5, 1.0, 2.0]
    for t, v in estimate_survival_po(c, uniform_weights(40), times):
        assert v == pytest.approx(np.mean(c.time > t), abs=1e-12)


def test_survival_po_before_first_time():
    c = make_cohort([2, 3, 4], [1, 0, 1])
    assert estimate_survival_po(c, uniform_weights(3), [1.0])[0][1] == pytest.approx(1.0)


def test_survival_po_at_last_time_matches_cure(shifted_pair):
    hist, trial = shifted_pair
    w, _ = build_weights(hist, trial, "maic")
    t_n = float(hist.time.max())
    [(_, s)] = estimate_survival_po(hist, w, [t_n])
    assert s == pytest.approx(estimate_cure_po(pseudo_cure(hist, warn=False), w).value, abs=1e-12)


def test_survival_km_uniform_is_km(shifted_pair):
    hist, _ = shifted_pair
    km = kaplan_meier(hist)
    times = [5.0, 20.0, 80.0]
    out = estimate_survival_km(hist, uniform_weights(hist.n), times)
    assert [v for _, v in out] == [evaluate(km, t) for t in times]


def test_survival_km_self_calibration(same_pair):
    hist, trial = same_pair
    w, _ = build_weights(hist, trial, "maic")
    times = [5.0, 20.0, 80.0]
    km = kaplan_meier(hist)
    for t, v in estimate_survival_km(hist, w, times):
        assert abs(v - evaluate(km, t)) < 1e-12


def test_survival_km_moves_with_shift(shifted_pair):
    # trial has higher covariates, hence more cures: adjusted curve sits higher
    hist, trial = shifted_pair
    w, _ = build_weights(hist, trial, "maic")
    km = kaplan_meier(hist)
    for t, v in estimate_survival_km(hist, w, [20.0, 100.0]):
        assert v > evaluate(km, t)


def test_cure_km_cases():
    plateau = make_cohort([1, 2, 3, 50, 60], [1, 0, 1, 0, 0])
    assert estimate_cure_km(plateau, uniform_weights(5)).value == pytest.approx(evaluate(kaplan_meier(plateau), 60))
    assert estimate_cure_km(make_cohort([1, 2], [1, 1]), uniform_weights(2)).value == 0.0
    assert estimate_cure_km(make_cohort([1, 2], [0, 0]), uniform_weights(2)).value == 1.0


def test_direct_constant_model():
    fit = OutcomeModelFit(np.zeros(3), True, 0)
    assert estimate_cure_direct(fit, np.random.default_rng(0).normal(size=(9, 2))).value == 0.5


def test_direct_single_subject():
    fit = OutcomeModelFit(np.array([0.2, 1.0]), True, 0)
    x = np.array([[0.3]])
    assert estimate_cure_direct(fit, x).value == pytest.approx(float(fit.predict(x)[0]))


def test_direct_on_same_population_recovers_po_mean(same_pair):
    hist, trial = same_pair
    pos = pseudo_cure(hist, warn=False)
    fit = fit_pseudo_logistic(pos, hist)
    # the intercept score equation makes mean(prediction) == mean(PO)
    assert estimate_cure_direct(fit, trial).value == pytest.approx(pos.mean(), abs=1e-9)
    assert estimate_cure_direct(fit, trial).logit_value == pytest.approx(logit(pos.mean()), abs=1e-8)


def test_record_shape():
    rec = estimate_cure_po(_pos([0.2, 0.4]), uniform_weights(2)).to_record()
    assert rec == {"method": "po", "weight_method": "uniform", "estimate": pytest.approx(0.3),
                   "ess": pytest.approx(2.0), "flags": []}
