import numpy as np
import pytest

from cureweight.cohort import Cohort
from cureweight.simulation import ScenarioSpec, generate_cohort


def make_cohort(time, event, covariates=None, label=""):
    time = np.asarray(time, dtype=float)
    if covariates is None:
        covariates = np.zeros((len(time), 1))
    return Cohort(time, np.asarray(event, dtype=bool), np.asarray(covariates, dtype=float), label=label)


def random_cohort(rng, n, p=2, censor_prob=0.3, ties=False):
    t = rng.integers(1, max(3, n // 3), n).astype(float) if ties else rng.exponential(10.0, n)
    ev = rng.random(n) > censor_prob
    return Cohort(t, ev, rng.normal(size=(n, p)))


def simulated_pair(seed, n=300, shift=0.5, n_trial=None, **spec_kw):
    """Historical (mean 0) and trial (mean ``shift``) cohorts from the scenario generator."""
    spec = ScenarioSpec(n=n, **spec_kw)
    rng = np.random.default_rng(seed)
    hist = generate_cohort(rng, n, 0.0, spec).cohort
    trial = generate_cohort(rng, n_trial or n, shift, spec, "trial").cohort
    return hist, trial


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture(scope="session")
def shifted_pair():
    return simulated_pair(11, n=400, shift=0.5)


@pytest.fixture(scope="session")
def same_pair():
    hist, _ = simulated_pair(12, n=400, shift=0.0)
    return hist, hist


def write_text(path, text):
    path.write_text(text, encoding="utf-8")
    return path


def pytest_terminal_summary(terminalreporter):
    import sys
    module = sys.modules.get("test_acceptance")
    verdicts = getattr(module, "VERDICTS", None)
    if not verdicts:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(verdicts):
        terminalreporter.write_line(verdicts[number])
