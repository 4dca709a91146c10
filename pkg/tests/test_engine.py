"""Optimization loop, optimizers and burn-in detection."""

import numpy as np
import pytest

from oracles import burn_in_by_hand, plateau_series
from swvi import families, streams
from swvi.engine import (AdamState, NumericalError, OptimizerConfig, SwviConfig, adam_step,
                         detect_stationarity, run_swvi, sgd_step, trailing_mean)
from swvi.families import meanfield
from swvi.mcmc import KernelConfig
from swvi.targets import GaussianSpec, Target, gaussian_target

STD1 = gaussian_target(GaussianSpec([0.0], [[1.0]]))
FROZEN = KernelConfig("rwmh", rwmh_std=1e-300)


# -- optimizers -----------------------------------------------------------------

def test_adam_zero_gradient_first_step():
    state, delta = adam_step(AdamState.zeros(3), np.zeros(3), 0.1)
    assert np.all(delta == 0.0) and state.t == 1


def test_adam_constant_gradient_step_tends_to_lr():
    state = AdamState.zeros(1)
    for _ in range(5000):
        state, delta = adam_step(state, np.array([-3.7]), 0.02)
    assert delta[0] == pytest.approx(0.02, rel=1e-6)


def test_adam_first_step_is_signed_lr():
    _, delta = adam_step(AdamState.zeros(2), np.array([5.0, -0.01]), 0.1)
    np.testing.assert_allclose(delta, [-0.1, 0.1], rtol=1e-6)


def test_sgd_step_definition():
    g = np.array([1.5, -2.0])
    assert np.array_equal(sgd_step(g, 0.3), -0.3 * g)


def test_optimizer_config_validation():
    with pytest.raises(ValueError):
        OptimizerConfig("rmsprop")
    with pytest.raises(ValueError):
        OptimizerConfig(beta1=1.0)


# -- configuration -------------------------------------------------------------------

@pytest.mark.parametrize("kwargs", [dict(iterations=0), dict(iterations=5, warmup_lag=6),
                                    dict(particles=1), dict(projections=0), dict(order=0.5),
                                    dict(learning_rate=-1.0)])
def test_config_validation(kwargs):
    with pytest.raises(ValueError):
        SwviConfig(**kwargs)


# -- loop ---------------------------------------------------------------------------

def test_fixed_point_run_is_flat():
    fam = meanfield([0.0], [0.0])
    cfg = SwviConfig(iterations=200, warmup_lag=0, particles=500, projections=20,
                     learning_rate=0.0, kernel=FROZEN, seed=3)
    trace = run_swvi(STD1, fam, cfg)
    assert np.array_equal(trace.params.flat, fam.flat)
    losses = trace.losses
    # two independent 500-point standard normal samples: W1 is O(n^-1/2)
    assert losses.max() < 0.2
    assert abs(losses[:100].mean() - losses[100:].mean()) < 0.02


def test_one_dimensional_recovery_with_ula():
    cfg = SwviConfig(iterations=400, warmup_lag=50, particles=500, projections=100,
                     learning_rate=0.05, kernel=KernelConfig("ula", ula_step=0.05), seed=0)
    trace = run_swvi(STD1, meanfield([3.0], [0.0]), cfg)
    mean, cov = families.gaussian_moments(trace.params)
    assert abs(mean[0]) < 0.15
    assert abs(np.sqrt(cov[0, 0]) - 1.0) < 0.15


def test_pure_mcmc_run_leaves_parameters_bit_equal():
    fam = meanfield([1.0], [0.5])
    trace = run_swvi(STD1, fam, SwviConfig(iterations=30, warmup_lag=30, particles=50,
                                           projections=5, seed=1))
    assert trace.params is fam or np.array_equal(trace.params.flat, fam.flat)
    assert len(trace.records) == 30


def test_warmup_does_not_touch_parameters():
    fam = meanfield([2.0], [0.0])
    base = dict(particles=100, projections=10, learning_rate=0.1, seed=2,
                kernel=KernelConfig("rwmh", rwmh_std=1.0))
    before = run_swvi(STD1, fam, SwviConfig(iterations=20, warmup_lag=20, **base))
    after = run_swvi(STD1, fam, SwviConfig(iterations=21, warmup_lag=20, **base))
    assert np.array_equal(before.params.flat, fam.flat)
    assert not np.array_equal(after.params.flat, fam.flat)
    # identical history up to the lag
    np.testing.assert_array_equal(before.losses, after.losses[:20])


def test_runs_are_bit_reproducible_across_threads(monkeypatch):
    target = gaussian_target(GaussianSpec([1.0, -1.0], [[1.0, 0.7], [0.7, 1.0]]))
    cfg = SwviConfig(iterations=30, warmup_lag=5, particles=700, projections=50, seed=4,
                     kernel=KernelConfig("hmc", hmc_step=0.1, hmc_leapfrogs=3))
    fam = families.fullcov([0.0, 0.0])
    traces = []
    for threads in ("1", "3", "0"):
        monkeypatch.setenv(streams.THREADS_ENV, threads)
        traces.append(run_swvi(target, fam, cfg))
    for t in traces[1:]:
        np.testing.assert_array_equal(t.losses, traces[0].losses)
        np.testing.assert_array_equal(t.params.flat, traces[0].params.flat)
        np.testing.assert_array_equal(t.cloud, traces[0].cloud)


def test_frozen_projections_option():
    cfg = SwviConfig(iterations=10, warmup_lag=10, particles=50, projections=5,
                     resample_projections=False, kernel=FROZEN, seed=0)
    trace = run_swvi(STD1, meanfield([0.0]), cfg, init_cloud=np.zeros((50, 1)))
    assert len(trace.records) == 10


def test_non_finite_loss_reports_iteration():
    # a huge drift throws the particles far out, where the gradient is infinite
    boom = Target(lambda z: np.zeros(z.shape[:-1]),
                  lambda z: np.where(np.abs(z) > 1e10, np.inf, 1e300), 1)
    cfg = SwviConfig(iterations=10, warmup_lag=0, particles=10, projections=3,
                     kernel=KernelConfig("ula", ula_step=1.0))
    with pytest.raises(NumericalError) as info:
        run_swvi(boom, meanfield([0.0]), cfg)
    assert info.value.iteration == 1
    assert "iteration 1" in str(info.value)


def test_dimension_mismatch():
    with pytest.raises(ValueError):
        run_swvi(STD1, meanfield([0.0, 0.0]), SwviConfig(iterations=2, warmup_lag=0))


# -- burn-in detection -----------------------------------------------------------------

def test_constant_series_is_stationary_from_zero():
    assert detect_stationarity(np.full(60, 0.7), 10, 0.02) == 0


def test_geometric_decay_never_stationary():
    assert detect_stationarity(0.5 ** np.arange(20), 5, 1e-3) is None


def test_plateau_series_agrees_with_hand_evaluation():
    s = plateau_series()
    got = detect_stationarity(s, 10, 0.02)
    assert got == burn_in_by_hand(s, 10, 0.02)
    assert 95 <= got <= 120


def test_start_offset():
    s = plateau_series()
    assert detect_stationarity(s, 10, 0.02, start=150) == 150


def test_short_series_rejected():
    with pytest.raises(ValueError):
        detect_stationarity(np.ones(5), 10, 0.02)
    with pytest.raises(ValueError):
        detect_stationarity(np.ones(50), 1, 0.02)
    with pytest.raises(ValueError):
        detect_stationarity(np.ones(50), 5, 0.0)


def test_trailing_mean_partial_windows():
    np.testing.assert_allclose(trailing_mean([1.0, 3.0, 5.0, 7.0], 2), [1.0, 2.0, 4.0, 6.0])
