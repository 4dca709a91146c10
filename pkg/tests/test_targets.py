"""Target densities: hand-evaluated values and finite-difference gradients."""

import numpy as np
import pytest
from scipy.special import expit
from scipy.stats import multivariate_normal

from oracles import central_diff, normwise_rel_err
from swvi import targets
from swvi.targets import (GaussianSpec, LogisticPosteriorSpec, MixtureSpec, Target,
                          gaussian_target, logistic_posterior, mixture_target,
                          predict_logistic)


def _random_spd(d, rng):
    a = rng.normal(size=(d, d))
    return a @ a.T + d * np.eye(d)


def test_standard_gaussian_values():
    t = gaussian_target(GaussianSpec([0.0], [[1.0]]))
    assert t.log_unnorm(np.array([0.0])) == 0.0
    assert t.grad_log_unnorm(np.array([0.0]))[0] == 0.0
    assert t.log_unnorm(np.array([2.0])) == pytest.approx(-2.0, abs=1e-15)
    assert t.grad_log_unnorm(np.array([2.0]))[0] == pytest.approx(-2.0, abs=1e-15)


def test_gradient_vanishes_at_mean():
    rng = np.random.default_rng(0)
    spec = GaussianSpec(rng.normal(size=3), _random_spd(3, rng))
    np.testing.assert_allclose(gaussian_target(spec).grad_log_unnorm(spec.mean), 0.0, atol=1e-12)


def test_gaussian_matches_scipy_up_to_constant():
    rng = np.random.default_rng(1)
    spec = GaussianSpec(rng.normal(size=3), _random_spd(3, rng))
    z = rng.normal(size=(10, 3))
    ours = gaussian_target(spec).log_unnorm(z) + spec.log_normalizer()
    ref = multivariate_normal(spec.mean, spec.covariance).logpdf(z)
    np.testing.assert_allclose(ours, ref, rtol=1e-12)


def test_gaussian_spec_validation():
    with pytest.raises(ValueError, match="symmetric"):
        GaussianSpec([0, 0], [[1, 0.5], [0.4, 1]])
    with pytest.raises(ValueError, match="positive definite"):
        GaussianSpec([0, 0], [[1, 2], [2, 1]])
    with pytest.raises(ValueError):
        GaussianSpec([0, 0, 0], np.eye(2))


def test_single_component_mixture_matches_gaussian():
    rng = np.random.default_rng(2)
    g = GaussianSpec(rng.normal(size=2), _random_spd(2, rng))
    mix = mixture_target(MixtureSpec([1.0], [g]))
    plain = gaussian_target(g)
    z = rng.normal(size=(50, 2)) * 3
    np.testing.assert_allclose(mix.log_unnorm(z), plain.log_unnorm(z) + g.log_normalizer(),
                               rtol=1e-12)
    np.testing.assert_allclose(mix.grad_log_unnorm(z), plain.grad_log_unnorm(z), atol=1e-10)


def test_symmetric_mixture_gradient_zero_at_origin():
    spec = MixtureSpec([0.5, 0.5], [GaussianSpec([-1.5], [[0.7]]), GaussianSpec([1.5], [[0.7]])])
    assert abs(mixture_target(spec).grad_log_unnorm(np.array([0.0]))[0]) < 1e-15


def test_mixture_validation():
    g = GaussianSpec([0.0], [[1.0]])
    with pytest.raises(ValueError):
        MixtureSpec([0.3, 0.3], [g, g])
    with pytest.raises(ValueError):
        MixtureSpec([0.5, 0.5], [g, GaussianSpec([0.0, 0.0], np.eye(2))])


def test_logistic_examples():
    rng = np.random.default_rng(3)
    X, y = rng.normal(size=(17, 4)), rng.integers(0, 2, size=17)
    t = logistic_posterior(LogisticPosteriorSpec(X, y))
    assert t.log_unnorm(np.zeros(4)) == pytest.approx(-17 * np.log(2.0), rel=1e-14)
    one = logistic_posterior(LogisticPosteriorSpec([[1.0]], [1]))
    assert one.grad_log_unnorm(np.array([0.0]))[0] == 0.5


def test_logistic_is_overflow_safe():
    t = logistic_posterior(LogisticPosteriorSpec([[1.0], [1.0]], [1, 0]))
    val = t.log_unnorm(np.array([800.0]))
    assert np.isfinite(val) and val == pytest.approx(-800.0)
    assert np.all(np.isfinite(t.grad_log_unnorm(np.array([800.0]))))


def test_logistic_spec_rejects_bad_labels():
    with pytest.raises(ValueError):
        LogisticPosteriorSpec([[1.0]], [2])


def _all_targets():
    rng = np.random.default_rng(4)
    g = GaussianSpec(rng.normal(size=3), _random_spd(3, rng))
    mix = MixtureSpec([0.3, 0.7], [g, GaussianSpec(rng.normal(size=3), _random_spd(3, rng))])
    X, y = rng.normal(size=(40, 3)), rng.integers(0, 2, size=40)
    return {"gaussian": gaussian_target(g), "mixture": mixture_target(mix),
            "logistic": logistic_posterior(LogisticPosteriorSpec(X, y))}


@pytest.mark.parametrize("name", ["gaussian", "mixture", "logistic"])
def test_gradients_match_finite_differences(name):
    t = _all_targets()[name]
    rng = np.random.default_rng(5)
    for z in rng.normal(size=(50, t.dim)) * 1.5:
        fd = central_diff(lambda w: float(t.log_unnorm(w)), z, h=1e-5)
        assert normwise_rel_err(t.grad_log_unnorm(z), fd) < 1e-5


@pytest.mark.parametrize("name", ["gaussian", "mixture", "logistic"])
def test_batched_evaluation_matches_rowwise(name):
    t = _all_targets()[name]
    z = np.random.default_rng(6).normal(size=(7, t.dim))
    np.testing.assert_allclose(t.log_unnorm(z), [t.log_unnorm(r) for r in z], rtol=1e-13)
    np.testing.assert_allclose(t.grad_log_unnorm(z), [t.grad_log_unnorm(r) for r in z],
                               rtol=1e-13)


def test_dimension_check():
    t = _all_targets()["gaussian"]
    with pytest.raises(ValueError):
        t.log_unnorm(np.zeros(2))


def test_predict_logistic():
    rng = np.random.default_rng(7)
    X = rng.normal(size=(9, 3))
    np.testing.assert_array_equal(predict_logistic(np.zeros((4, 3)), X), 0.5)
    w = rng.normal(size=3)
    np.testing.assert_array_equal(predict_logistic(w[None], X), expit(X @ w))
    np.testing.assert_allclose(predict_logistic(np.stack([w, -w]), X), 0.5, atol=1e-15)


def test_toy_specs():
    g = targets.toy_gaussian()
    assert g.covariance[0, 1] == 0.7
    m = targets.toy_mixture()
    assert len(m.components) == 2 and m.dim == 2


def test_target_is_plain_record():
    t = Target(lambda z: -z.sum(-1), lambda z: -np.ones_like(z), 2)
    assert t.name == "target"
