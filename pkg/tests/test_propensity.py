import math
import warnings

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from ipwsurv.errors import AlignmentError
from ipwsurv.propensity import (DegenerateOutcomeError, SeparationWarning, compute_weights, expit,
                                fit_logistic, log_likelihood_gradient)
from ipwsurv.simulation import SCENARIOS, assign_treatment, generate_covariates


def two_by_two():
    x = np.array([1.0] * 50 + [0.0] * 50)
    z = np.array([1] * 40 + [0] * 10 + [1] * 10 + [0] * 40)
    return x, z


def test_null_model():
    x = np.zeros((10, 2))
    z = np.array([0, 1] * 5)
    with warnings.catch_warnings():
        # zero columns make the Hessian singular; lstsq gives the minimum-norm step
        warnings.simplefilter("ignore", SeparationWarning)
        fit = fit_logistic(x, z)
    assert fit.coefficients[0] == pytest.approx(0.0, abs=1e-12)
    np.testing.assert_allclose(fit.scores, 0.5)


def test_two_by_two_log_odds_ratio():
    x, z = two_by_two()
    fit = fit_logistic(x, z)
    assert fit.coefficients[1] == pytest.approx(math.log(16), abs=1e-8)
    assert fit.coefficients[0] == pytest.approx(math.log(10 / 40), abs=1e-8)


def test_irls_fixed_point():
    rng = np.random.default_rng(0)
    x = rng.standard_normal((500, 3))
    z, _ = assign_treatment(x, SCENARIOS["moderate"], rng)
    fit = fit_logistic(x, z)
    xi = np.column_stack([np.ones(500), x])
    assert np.max(np.abs(log_likelihood_gradient(xi, z, fit.coefficients))) < 1e-6


def test_moderate_recovery_large_sample():
    rng = np.random.default_rng(11)
    x = generate_covariates(100_000, seed=rng)
    z, _ = assign_treatment(x, SCENARIOS["moderate"], rng)
    fit = fit_logistic(x, z)
    np.testing.assert_allclose(fit.coefficients[1:], SCENARIOS["moderate"], atol=0.05)


def test_single_class():
    with pytest.raises(DegenerateOutcomeError):
        fit_logistic(np.ones((5, 1)), np.ones(5))


def test_separation_warns_and_clips():
    x = np.linspace(-1, 1, 40)
    z = (x > 0).astype(int)
    with pytest.warns(SeparationWarning):
        fit = fit_logistic(x, z)
    assert fit.scores.min() >= 0.01 and fit.scores.max() <= 0.99
    assert fit.clipped.any()


@pytest.mark.parametrize("scheme,z,pi,expected", [
    ("ATE", 1, 0.5, 2.0),
    ("ATE", 0, 0.2, 1.25),
    ("ATT", 1, 0.9, 1.0),
    ("ATT", 0, 0.8, 4.0),
])
def test_weight_examples(scheme, z, pi, expected):
    w = compute_weights(np.array([pi]), np.array([z]), scheme)
    assert w.weights[0] == pytest.approx(expected, rel=1e-15)
    assert w.scheme == scheme


def test_weight_alignment():
    with pytest.raises(AlignmentError):
        compute_weights(np.array([0.5, 0.5]), np.array([1]))


def test_stabilized_weights():
    pi = np.array([0.5, 0.5, 0.5, 0.5])
    z = np.array([1, 1, 1, 0])
    w = compute_weights(pi, z, "ATE", stabilized=True).weights
    np.testing.assert_allclose(w, [0.75 * 2, 0.75 * 2, 0.75 * 2, 0.25 * 2])


probs = st.floats(0.01, 0.99)


@given(st.lists(st.tuples(st.integers(0, 1), probs), min_size=1, max_size=50))
def test_weight_properties(pairs):
    z = np.array([p[0] for p in pairs])
    pi = np.array([p[1] for p in pairs])
    ate = compute_weights(pi, z, "ATE").weights
    att = compute_weights(pi, z, "ATT").weights
    assert np.all(ate >= 1.0)
    assert np.all(ate <= 1 / 0.01 + 1e-9)
    assert np.all(att[z == 1] == 1.0)
    assert np.all(np.isfinite(att))


def test_att_control_increasing_in_pi():
    pi = np.linspace(0.01, 0.99, 50)
    w = compute_weights(pi, np.zeros(50), "ATT").weights
    assert np.all(np.diff(w) > 0)


def test_expit_extremes():
    out = expit(np.array([-1000.0, 0.0, 1000.0]))
    np.testing.assert_array_equal(out, [0.0, 0.5, 1.0])
