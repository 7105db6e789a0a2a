import numpy as np
import pytest
from conftest import make_cohort, simulated_pair

from cureweight.errors import InferenceError, ValidationError
from cureweight.inference import (
    BootstrapSpec,
    bootstrap_estimate,
    variance_naive,
    variance_survey,
    write_replicates,
)
from cureweight.pipeline import Pipeline
from cureweight.survival import WeightSet, uniform_weights


@pytest.fixture(scope="module")
def small_pair():
    return simulated_pair(5, n=150, shift=0.5)


def test_identical_subjects_zero_variance():
    same = make_cohort([3.0] * 12, [0] * 12)
    est = bootstrap_estimate(same, same.covariates, Pipeline("none", "po"), BootstrapSpec(100, 1))
    assert est.variance == 0.0
    assert est.ci_low == est.ci_high == est.point == 1.0


def test_fixed_seed_is_bit_identical(small_pair):
    hist, trial = small_pair
    spec = BootstrapSpec(300, 42)
    a = bootstrap_estimate(hist, trial, Pipeline("maic", "po"), spec)
    b = bootstrap_estimate(hist, trial, Pipeline("maic", "po"), spec)
    assert a.to_record() == b.to_record()
    assert np.array_equal(a.estimates, b.estimates, equal_nan=True)


def test_seed_changes_replicates(small_pair):
    hist, trial = small_pair
    a = bootstrap_estimate(hist, trial, Pipeline("maic", "po"), BootstrapSpec(100, 1))
    b = bootstrap_estimate(hist, trial, Pipeline("maic", "po"), BootstrapSpec(100, 2))
    assert not np.array_equal(a.estimates, b.estimates)


def test_worker_count_does_not_matter(small_pair):
    hist, trial = small_pair
    spec = BootstrapSpec(120, 9)
    a = bootstrap_estimate(hist, trial, Pipeline("ma", "pol"), spec, threads=1)
    b = bootstrap_estimate(hist, trial, Pipeline("ma", "pol"), spec, threads=3)
    assert np.array_equal(a.estimates, b.estimates, equal_nan=True)
    assert a.to_record() == b.to_record()


def test_logit_interval_inside_unit_interval(small_pair):
    hist, trial = small_pair
    est = bootstrap_estimate(hist, trial, Pipeline("maic", "po"),
                             BootstrapSpec(200, 3, 0.99, "logit"))
    assert 0.0 <= est.ci_low <= est.point <= est.ci_high <= 1.0


def test_percentile_interval_brackets_point(small_pair):
    hist, trial = small_pair
    est = bootstrap_estimate(hist, trial, Pipeline("none", "km"), BootstrapSpec(200, 3))
    assert est.ci_low < est.point < est.ci_high
    assert est.se == pytest.approx(np.sqrt(est.variance))


def test_too_many_failures_raise():
    # one late censored subject carries all the cure mass; about a third of
    # resamples miss it, leaving a PO mean of 0 where the logit link fails
    c = make_cohort(np.append(np.arange(1.0, 20.0), 100.0), np.append(np.ones(19), 0))
    with pytest.raises(InferenceError, match="BoundaryError"):
        bootstrap_estimate(c, c.covariates, Pipeline("none", "pol"), BootstrapSpec(100, 0))


def test_spec_validation():
    with pytest.raises(ValidationError):
        BootstrapSpec(1)
    with pytest.raises(ValidationError):
        BootstrapSpec(100, ci_level=1.5)
    with pytest.warns(UserWarning):
        BootstrapSpec(10)


def test_replicates_csv(tmp_path, small_pair):
    hist, trial = small_pair
    est = bootstrap_estimate(hist, trial, Pipeline("none", "po"), BootstrapSpec(100, 0))
    write_replicates(est, tmp_path / "r.csv")
    assert len((tmp_path / "r.csv").read_text().splitlines()) == 101


def test_variance_naive_examples():
    assert variance_naive([0.0, 1.0], uniform_weights(2), 0.5) == pytest.approx(0.125)
    assert variance_naive([0.3, 0.3, 0.3], uniform_weights(3), 0.3) == 0.0
    w = WeightSet.from_raw([1.0, 1e-15, 1e-15])
    assert variance_naive([0.9, 0.1, 0.2], w, 0.4) == pytest.approx(0.25)


def test_variance_survey_examples():
    y = np.array([0.2, 0.6, 0.9])
    w = uniform_weights(3)
    assert variance_survey(y, w, 0.5) == pytest.approx(variance_naive(y, w, 0.5))
    assert variance_survey(y, w, y) == 0.0
    assert variance_survey([0.6, 0.4], uniform_weights(2), [0.5, 0.5]) == pytest.approx(0.005)
