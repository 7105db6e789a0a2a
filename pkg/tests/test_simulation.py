import numpy as np
import pytest
from scipy.special import expit

from cureweight.errors import ValidationError
from cureweight.simulation import (
    CURE_ESTIMATORS,
    ScenarioSpec,
    compute_truth,
    cure_probability,
    generate_cohort,
    generate_subject,
    load_grid,
    render_table,
    run_scenario,
    run_survival_scenario,
    weibull_time,
    write_replicates_long,
)


def gauss_hermite_q0(a, b, p, nodes=80):
    # s = sum of p independent N(b, 1) draws ~ N(p b, p)
    x, w = np.polynomial.hermite_e.hermegauss(nodes)
    return float(w @ expit(a * (p * b + np.sqrt(p) * x)) / np.sqrt(2 * np.pi))


def test_weibull_inverse_cdf():
    assert weibull_time(0.0, 0.5, 1.0) == pytest.approx(np.exp(3) * np.log(2))
    assert weibull_time(0.0, 0.5, 1.0) == pytest.approx(13.92, abs=0.01)


def test_cure_probability_at_zero():
    for a in (0.0, 0.35, 5.0):
        assert cure_probability(np.zeros((1, 3)), ScenarioSpec(a=a))[0] == 0.5


def test_cured_subjects_only_censored():
    spec = ScenarioSpec(n=2000)
    sim = generate_cohort(np.random.default_rng(0), 2000, 0.0, spec)
    assert sim.cured.any()
    assert not sim.cohort.event[sim.cured].any()
    assert np.all(np.isinf(sim.latent_time[sim.cured]))
    assert np.all(np.isfinite(sim.latent_time[~sim.cured]))


def test_generate_subject_shape():
    rec, cured, latent = generate_subject(np.random.default_rng(1), 0.5, ScenarioSpec(p=4))
    assert len(rec.covariates) == 4 and isinstance(cured, bool)
    assert cured == np.isinf(latent)


def test_covariate_shift():
    spec = ScenarioSpec()
    X = generate_cohort(np.random.default_rng(2), 50_000, 0.5, spec).cohort.covariates
    np.testing.assert_allclose(X.mean(axis=0), 0.5, atol=0.02)
    np.testing.assert_allclose(X.std(axis=0), 1.0, atol=0.02)


def test_truth_symmetric_cases():
    rng = np.random.default_rng(3)
    assert abs(compute_truth(ScenarioSpec(a=0.0, b=0.8), rng).q0 - 0.5) < 0.005
    assert abs(compute_truth(ScenarioSpec(a=0.7, b=0.0), rng).q0 - 0.5) < 0.005


def test_truth_matches_quadrature():
    truth = compute_truth(ScenarioSpec(a=0.7, b=0.5, p=3), np.random.default_rng(4))
    oracle = gauss_hermite_q0(0.7, 0.5, 3)
    assert oracle == pytest.approx(0.69397062, abs=1e-8)
    assert abs(truth.q0 - oracle) < 0.005


def test_truth_stability():
    spec = ScenarioSpec()
    a = compute_truth(spec, np.random.default_rng(5)).q0
    b = compute_truth(spec, np.random.default_rng(6)).q0
    assert abs(a - b) < 0.005


def test_truth_survival_grid():
    truth = compute_truth(ScenarioSpec(truth_n=20_000), np.random.default_rng(7), [25.0, 400.0])
    assert 1 >= truth.s0[25.0] >= truth.s0[400.0] >= truth.q0 - 0.02


def test_spec_validation():
    with pytest.raises(ValidationError):
        ScenarioSpec(n=1)
    with pytest.raises(ValidationError):
        ScenarioSpec.from_mapping({"n": 200, "shpe": 2})
    with pytest.raises(ValidationError):
        ScenarioSpec.from_mapping({"n": 2.5})
    assert ScenarioSpec.from_mapping({"n": "300", "a": "0.35"}) == ScenarioSpec(n=300, a=0.35)


def test_malformed_grid_rejected_before_running(tmp_path):
    f = tmp_path / "g.yaml"
    f.write_text("scenarios:\n  - {n: 200}\n  - {n: 200, shape: -1}\n")
    with pytest.raises(ValidationError):
        load_grid(f)
    f.write_text("defaults: {n: 100}\nscenarios:\n  - {a: 0.35}\n  - {p: 5}\n")
    specs = load_grid(f)
    assert [s.n for s in specs] == [100, 100] and specs[1].p == 5


def test_scenario_is_deterministic():
    spec = ScenarioSpec(n=100, replicates=30, seed=8, truth_n=10_000)
    a, b = run_scenario(spec), run_scenario(spec)
    assert np.array_equal(a.estimates, b.estimates)
    assert a.q0 == b.q0


def test_scenario_thread_independent():
    spec = ScenarioSpec(n=100, replicates=30, seed=8, truth_n=10_000)
    assert np.array_equal(run_scenario(spec, 1).estimates, run_scenario(spec, 3).estimates)


def test_no_confounding_no_bias():
    r = run_scenario(ScenarioSpec(n=200, a=0.0, g=0.0, b=0.0, replicates=300, seed=9, truth_n=20_000))
    for k in CURE_ESTIMATORS:
        # 3 Monte Carlo standard errors
        assert abs(r.bias100[k]) < 3 * r.se100[k] / np.sqrt(300) + 0.5


def test_bias_ordering():
    for kw in ({"a": 0.7, "g": -0.3}, {"a": 0.35, "g": 0.3, "shape": 2.0}):
        r = run_scenario(ScenarioSpec(n=200, replicates=200, seed=10, truth_n=20_000, **kw))
        adjusted = [abs(r.bias100[k]) for k in CURE_ESTIMATORS[1:]]
        assert abs(r.bias100["unadj"]) > max(adjusted)


def test_base_censoring_rate():
    r = run_scenario(ScenarioSpec(n=500, replicates=100, seed=11, truth_n=10_000))
    assert 0.25 <= r.censoring_rate <= 0.35, f"censoring rate {r.censoring_rate:.3f}"


@pytest.mark.slow
def test_shape_two_five_covariates():
    r = run_scenario(ScenarioSpec(n=200, a=0.35, g=0.3, p=5, shape=2.0, replicates=2000, seed=12))
    assert abs(r.bias100["maic_po"] - 0.1) <= 1.0
    assert abs(r.bias100["unadj"] - (-12.2)) <= 1.5, f"unadjusted bias x100 {r.bias100['unadj']:.2f}"


def test_survival_identical_populations():
    spec = ScenarioSpec(n=300, a=0.0, g=0.0, b=0.0, replicates=100, seed=13, truth_n=20_000)
    res = run_survival_scenario(spec, (25.0, 100.0, 400.0))
    for name in ("unadj_km", "ipw", "maic", "ma"):
        assert np.all(np.abs(res.median_error(name)) < 0.02), name


def test_survival_ma_variance_ratio():
    spec = ScenarioSpec(n=300, replicates=300, seed=14, truth_n=20_000)
    res = run_survival_scenario(spec, (250.0, 400.0))
    ratio = res.error_variance("ma") / res.error_variance("maic")
    assert np.all((ratio > 0.80) & (ratio < 1.05)), ratio


def test_survival_summary_rows():
    spec = ScenarioSpec(n=100, replicates=10, seed=15, truth_n=10_000)
    res = run_survival_scenario(spec, (25.0, 50.0))
    rows = res.summary()
    assert len(rows) == 4 * 2
    assert all(r["q05"] <= r["median"] <= r["q95"] for r in rows)


def test_render_table_empty():
    csv_text, text = render_table([])
    assert csv_text.count("\n") == 1
    assert text.count("\n") == 2


@pytest.fixture(scope="module")
def two_results():
    specs = [ScenarioSpec(n=60, replicates=5, seed=s, truth_n=10_000, a=a)
             for s, a in ((16, 0.7), (17, 0.35))]
    return [run_scenario(s) for s in specs]


def test_render_table_rows(two_results, tmp_path):
    csv_text, text = render_table(two_results[:1])
    lines = csv_text.splitlines()
    assert len(lines) == 2
    header, row = lines[0].split(","), lines[1].split(",")
    for key in ("bias_unadj", "se_maic_po"):
        assert len(row[header.index(key)].split(".")[1]) == 1
    csv_text, _ = render_table(two_results)
    assert [line.split(",")[1] for line in csv_text.splitlines()[1:]] == ["0.70", "0.35"]
    write_replicates_long(two_results, tmp_path / "long.csv")
    assert len((tmp_path / "long.csv").read_text().splitlines()) == 1 + 2 * 5 * len(CURE_ESTIMATORS)
