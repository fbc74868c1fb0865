import math

import numpy as np
import pytest
from scipy import stats

from ipwsurv.errors import ConfigError
from ipwsurv.simulation import (SCENARIOS, CalibrationError, SimulationConfig, assign_treatment,
                                calibrate_censoring, generate_covariates, generate_times, simulate,
                                standardized_mean_difference, weibull_times)


def test_covariate_moments():
    x = generate_covariates(100_000, seed=0)
    np.testing.assert_allclose(x.mean(axis=0), 0, atol=0.02)
    np.testing.assert_allclose(x.std(axis=0), 1, atol=0.02)


def test_collider_correlation():
    x = generate_covariates(100_000, collider=True, seed=1)
    r = np.corrcoef(x[:, 1], x[:, 0])[0, 1]
    assert r == pytest.approx(5 / math.sqrt(51), abs=0.02)


def test_collider_deterministic():
    x = generate_covariates(50, collider=True, seed=1, deterministic=True)
    np.testing.assert_allclose(x[:, 1], 5 * x[:, 0] + 5 * x[:, 2])


def test_covariates_deterministic():
    np.testing.assert_array_equal(generate_covariates(20, seed=5), generate_covariates(20, seed=5))


def test_null_assignment():
    x = generate_covariates(100_000, seed=2)
    z, p = assign_treatment(x, (0, 0, 0), seed=3)
    assert np.all(p == 0.5)
    assert abs(z.mean() - 0.5) < 0.01


def test_mild_assignment_probabilities():
    x = np.array([[1.0, 2.0, -1.0]])
    _, p = assign_treatment(x, SCENARIOS["mild"], seed=0)
    assert p[0] == pytest.approx(1 / (1 + math.exp(-(0.3 - 0.4 - 0.1))))


def test_extreme_assignment_probability():
    _, p = assign_treatment(np.ones((1, 3)), SCENARIOS["extreme"], seed=0)
    assert p[0] == pytest.approx(1 / (1 + math.exp(-4)), rel=1e-12)
    assert p[0] == pytest.approx(0.982, abs=5e-4)


def test_weibull_substitution():
    u = np.array([math.exp(-1)])
    assert weibull_times(u, np.zeros(1), 18, 2)[0] == pytest.approx(18.0)
    assert weibull_times(u, np.zeros(1), 20, 2)[0] == pytest.approx(20.0)


def test_weibull_decreasing_in_h():
    u = np.full(5, 0.3)
    y = weibull_times(u, np.linspace(-1, 1, 5), 18, 2)
    assert np.all(np.diff(y) < 0)


def test_weibull_quantiles_at_zero_covariates():
    x = np.zeros((100_000, 3))
    _, y0, y1 = generate_times(x, np.zeros(100_000), SimulationConfig(), seed=4)
    for q in (0.25, 0.5, 0.75):
        expected = stats.weibull_min.ppf(q, 2, scale=18)
        assert np.quantile(y0, q) == pytest.approx(expected, rel=0.01)
        assert np.quantile(y1, q) == pytest.approx(stats.weibull_min.ppf(q, 2, scale=20), rel=0.01)


def test_shared_u_comonotone():
    x = np.zeros((200, 3))
    _, y0, y1 = generate_times(x, np.zeros(200), SimulationConfig(), seed=0)
    np.testing.assert_array_equal(np.argsort(y0), np.argsort(y1))
    _, a0, a1 = generate_times(x, np.zeros(200), SimulationConfig(independent_u=True), seed=0)
    assert not np.array_equal(np.argsort(a0), np.argsort(a1))


def test_censoring_zero_target():
    c, cmax = calibrate_censoring(np.ones(10), 0.0, seed=0)
    assert np.all(np.isinf(c)) and math.isinf(cmax)
    cohort = simulate(SimulationConfig(n=200, censoring_target=0.0))
    assert np.all(cohort.dataset.event == 1)


@pytest.mark.parametrize("target", [0.3, 0.5])
def test_censoring_calibration(target):
    cohort = simulate(SimulationConfig(n=100_000, beta=SCENARIOS["mild"], censoring_target=target, seed=8))
    achieved = 1 - cohort.dataset.event.mean()
    assert abs(achieved - target) <= 0.01


def test_huge_cmax_gives_little_censoring():
    y = simulate(SimulationConfig(n=5000, seed=1)).true_times
    rng = np.random.default_rng(0)
    c = rng.uniform(0, 1000 * y.max(), len(y))
    assert np.mean(y > c) < 0.01


def test_bad_target():
    with pytest.raises(CalibrationError):
        calibrate_censoring(np.ones(4), 0.97)


def test_cohort_invariants():
    cfg = SimulationConfig(n=1000, beta=SCENARIOS["mild"], censoring_target=0.3, seed=12)
    cohort = simulate(cfg)
    d = cohort.dataset
    assert len(d) == 1000
    np.testing.assert_array_equal(cohort.true_times, np.where(d.treatment == 1, cohort.y1, cohort.y0))
    np.testing.assert_array_equal(d.time, np.minimum(cohort.true_times, cohort.censoring_times))
    np.testing.assert_array_equal(d.event, (cohort.true_times < cohort.censoring_times).astype(int))
    assert d.event.mean() == pytest.approx(0.70, abs=0.05)
    again = simulate(cfg)
    np.testing.assert_array_equal(again.dataset.covariates, d.covariates)
    np.testing.assert_array_equal(again.dataset.time, d.time)


def test_imbalance_ordering():
    smd = []
    for level in ("mild", "moderate", "severe", "extreme"):
        c = simulate(SimulationConfig(n=100_000, beta=SCENARIOS[level], seed=3))
        smd.append(standardized_mean_difference(c.dataset.covariates, c.dataset.treatment, SCENARIOS[level]))
    assert all(a < b for a, b in zip(smd, smd[1:]))


def test_config_validation():
    with pytest.raises(ConfigError):
        SimulationConfig(n=0)
    with pytest.raises(ConfigError):
        SimulationConfig(censoring_target=1.0)
    with pytest.raises(ConfigError):
        SimulationConfig.scenario("wild")
