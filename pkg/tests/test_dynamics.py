import numpy as np
import pytest

from bandsim.allocation import PoissonClock, SimState, run_to_convergence
from bandsim.dynamics import (DynamicsConfig, FitError, SimTrace,
                              StatisticsError, default_warmup,
                              empirical_steady_state_variance,
                              ensemble_mean_trace, fit_exponential_decay,
                              lambda_from_alpha, markov_toggle_all,
                              predicted_variance, replica_streams,
                              run_ensemble, sample_on_grid,
                              simulate_time_varying, stability_margin,
                              steady_state_stats)
from bandsim.interference import (ActivityState, all_band_one,
                                  uniform_random_assignment)
from bandsim.topology import make_uniform_linear_array


def _flat_trace(level: float, t_end: float = 10.0, n: int = 1) -> SimTrace:
    return SimTrace(times=np.array([0.0, t_end]),
                    aggregates=np.array([level, level]),
                    active_counts=np.array([float(n), float(n)]),
                    n=n, delta_t=1.0)


def test_config_validation():
    with pytest.raises(ValueError):
        DynamicsConfig(delta_t=0.0, horizon=1.0)
    with pytest.raises(ValueError):
        DynamicsConfig(delta_t=0.1, horizon=0.0)
    with pytest.raises(ValueError):
        DynamicsConfig(delta_t=0.1, horizon=1.0, alpha=1.5)
    with pytest.raises(ValueError):
        DynamicsConfig(delta_t=0.1, horizon=1.0, replicas=0)
    with pytest.raises(ValueError):
        DynamicsConfig(delta_t=0.1, horizon=1.0, warmup=1.0)
    cfg = DynamicsConfig(delta_t=0.01, horizon=2.0)
    assert cfg.tau(100) == pytest.approx(1.0)


def test_lambda_from_alpha():
    # n^2 (1 - alpha) / (2 tau)
    assert lambda_from_alpha(0.9, 100, 1.0) == pytest.approx(500.0)
    assert lambda_from_alpha(1.0, 100, 1.0) == 0.0
    assert lambda_from_alpha(0.5, 10, 2.0) == pytest.approx(12.5)
    with pytest.raises(ValueError):
        lambda_from_alpha(0.9, 100, 0.0)


def test_stability_margin():
    assert stability_margin(1.0, 3.0) == 0.0
    # margin hits 1 exactly at alpha = 5/8 for rho = 3
    assert stability_margin(5.0 / 8.0, 3.0) == pytest.approx(1.0)
    assert stability_margin(0.9, 3.0) == pytest.approx(8.0 * 0.1 / 3.0)
    with pytest.raises(ValueError):
        stability_margin(0.9, 0.0)


def test_default_warmup():
    assert default_warmup(1.0, 3.0) == pytest.approx(10.0 / 3.0)
    assert default_warmup(2.0) == pytest.approx(20.0 / 3.0)


def test_predicted_variance_finite():
    # lam=500, tau=1, n=100, rho=3: margin 16*500/(10000*3) = 4/15
    pred = predicted_variance(2.0, 500.0, 1.0, 100, 3.0)
    assert pred.margin == pytest.approx(4.0 / 15.0)
    assert not pred.divergent
    # sigma = i_a^2 * margin / (1 - margin)
    assert pred.sigma_ss_sq == pytest.approx(4.0 * (4.0 / 15.0) / (11.0 / 15.0))
    assert pred.sigma_ss_sq == pytest.approx(4.0 * 0.36363636363636365)


def test_predicted_variance_divergent():
    # margin >= 1 pins the variance at +inf
    lam_crit = 3.0 * 100 * 100 / 16.0
    pred = predicted_variance(1.0, lam_crit, 1.0, 100, 3.0)
    assert pred.margin == pytest.approx(1.0)
    assert pred.divergent
    assert pred.sigma_ss_sq == np.inf
    with pytest.raises(ValueError):
        predicted_variance(1.0, -1.0, 1.0, 100)
    with pytest.raises(ValueError):
        predicted_variance(1.0, 1.0, 0.0, 100)


def test_markov_toggle_extremes():
    act = ActivityState(np.array([True, False, True, True]), alpha=1.0)
    out = markov_toggle_all(act, np.random.default_rng(0))
    assert np.array_equal(out.active, act.active)
    act0 = ActivityState(np.array([True, False, True, True]), alpha=0.0)
    out0 = markov_toggle_all(act0, np.random.default_rng(0))
    assert np.array_equal(out0.active, ~act0.active)
    assert out0.alpha == 0.0


def test_markov_toggle_flip_rate():
    rng = np.random.default_rng(31)
    act = ActivityState(np.ones(20000, dtype=bool), alpha=0.7)
    out = markov_toggle_all(act, rng)
    flipped = np.mean(out.active != act.active)
    assert flipped == pytest.approx(0.3, abs=0.02)


def test_replica_streams_deterministic_and_independent():
    s1, a1 = replica_streams(42)
    s2, a2 = replica_streams(42)
    assert s1.random(5) == pytest.approx(s2.random(5))
    assert a1.random(5) == pytest.approx(a2.random(5))
    s3, a3 = replica_streams(42)
    assert not np.allclose(s3.random(5), a3.random(5))


def test_simulate_trace_shape_and_snapshot():
    top = make_uniform_linear_array(10, 1.0)
    cfg = DynamicsConfig(delta_t=0.05, horizon=2.0)
    tr = simulate_time_varying(top, cfg, 2, seed=3)
    assert tr.times[0] == 0.0
    assert tr.clusters[0] == -1
    assert tr.old_bands[0] == 0 and tr.new_bands[0] == 0
    assert tr.active_counts[0] == 10
    assert tr.n == 10
    assert tr.tau == pytest.approx(0.5)
    assert tr.events == tr.times.size - 1
    assert tr.times[-1] <= 2.0
    assert np.all(np.diff(tr.times) > 0)
    # alpha = 1: everyone stays active and the trace ends converged
    assert np.all(tr.active_counts == 10)
    assert tr.final_bands is not None and tr.seed == 3


def test_simulate_deterministic_per_seed():
    top = make_uniform_linear_array(8, 1.0)
    cfg = DynamicsConfig(delta_t=0.1, horizon=3.0)
    a = simulate_time_varying(top, cfg, 2, seed=11)
    b = simulate_time_varying(top, cfg, 2, seed=11)
    assert np.array_equal(a.times, b.times)
    assert np.array_equal(a.aggregates, b.aggregates)
    assert np.array_equal(a.final_bands, b.final_bands)
    c = simulate_time_varying(top, cfg, 2, seed=12)
    assert not np.array_equal(a.times, c.times)


def test_simulate_rejects_mismatched_initial():
    top = make_uniform_linear_array(5, 1.0)
    cfg = DynamicsConfig(delta_t=0.1, horizon=1.0)
    with pytest.raises(ValueError):
        simulate_time_varying(top, cfg, 2, seed=0,
                              initial=all_band_one(5, 3))


def test_simulate_alpha_one_matches_static_engine():
    # with no churn the event loop replays the static Poisson dynamics
    top = make_uniform_linear_array(20, 1.0)
    cfg = DynamicsConfig(delta_t=0.05, horizon=10.0)
    tr = simulate_time_varying(top, cfg, 2, seed=7)
    sched_rng, _ = replica_streams(7)
    state = SimState(top, all_band_one(20, 2), rng=sched_rng)
    state, records = run_to_convergence(state, PoissonClock(0.05))
    assert np.array_equal(tr.final_bands, state.bands)
    # event-by-event match over the shared prefix
    k = min(len(records), tr.events)
    assert k > 0
    assert np.array_equal(tr.clusters[1:k + 1],
                          [rec.cluster for rec in records[:k]])
    assert tr.aggregates[1:k + 1] == pytest.approx(
        [rec.aggregate_after for rec in records[:k]])


def test_simulate_warns_on_fast_churn():
    top = make_uniform_linear_array(5, 1.0)
    cfg = DynamicsConfig(delta_t=0.1, horizon=0.5, alpha=0.5)
    with pytest.warns(RuntimeWarning, match="near-equilibrium"):
        simulate_time_varying(top, cfg, 2, seed=0)


def test_simulate_no_warning_at_slow_churn():
    top = make_uniform_linear_array(5, 1.0)
    cfg = DynamicsConfig(delta_t=0.1, horizon=0.5, alpha=0.95)
    import warnings as w
    with w.catch_warnings():
        w.simplefilter("error", RuntimeWarning)
        simulate_time_varying(top, cfg, 2, seed=0)


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_simulate_empty_active_rows():
    # alpha = 0 flips every cluster each event: the active set alternates
    # between everyone and no one
    top = make_uniform_linear_array(2, 1.0)
    cfg = DynamicsConfig(delta_t=0.05, horizon=3.0, alpha=0.0)
    tr = simulate_time_varying(top, cfg, 2, seed=5)
    empty = tr.clusters == -1
    empty[0] = False
    assert empty.any()
    assert np.all(tr.aggregates[empty] == 0.0)
    assert np.all(tr.active_counts[empty] == 0)


def test_sample_on_grid_piecewise_constant():
    tr = SimTrace(times=np.array([0.0, 1.0, 2.0]),
                  aggregates=np.array([5.0, 3.0, 1.0]),
                  active_counts=np.array([2.0, 2.0, 2.0]), n=2, delta_t=1.0)
    got = sample_on_grid(tr, np.array([0.0, 0.5, 1.0, 1.999, 2.0, 5.0]))
    assert got == pytest.approx([5.0, 5.0, 3.0, 3.0, 1.0, 1.0])
    with pytest.raises(ValueError):
        sample_on_grid(tr, np.array([-0.1]))


def test_ensemble_mean_trace():
    a = _flat_trace(2.0)
    b = _flat_trace(4.0)
    grid = np.arange(0.0, 10.0, 1.0)
    mean = ensemble_mean_trace([a, b], grid)
    assert mean.aggregates == pytest.approx(np.full(10, 3.0))
    assert mean.n == 1 and mean.delta_t == 1.0
    with pytest.raises(ValueError):
        ensemble_mean_trace([], grid)


def test_run_ensemble_seed_layout():
    top = make_uniform_linear_array(6, 1.0)
    cfg = DynamicsConfig(delta_t=0.1, horizon=1.0, replicas=3)
    traces = run_ensemble(top, cfg, 2, base_seed=100)
    assert len(traces) == 3
    assert [tr.seed for tr in traces] == [100, 101, 102]
    solo = simulate_time_varying(top, cfg, 2, seed=101)
    assert np.array_equal(traces[1].times, solo.times)
    assert np.array_equal(traces[1].aggregates, solo.aggregates)


def test_fit_recovers_exact_exponential():
    # mean(t) = i_a + (i_w - i_a) e^(-rho t / tau), tau = 1
    rho, i_a, i_w = 2.5, 10.0, 100.0
    t = np.linspace(0.0, 5.0, 501)
    tr = SimTrace(times=t, aggregates=i_a + (i_w - i_a) * np.exp(-rho * t),
                  active_counts=np.full_like(t, 10.0), n=10, delta_t=0.1)
    assert fit_exponential_decay(tr, i_a, i_w) == pytest.approx(rho, abs=1e-6)


def test_fit_uses_only_the_early_bracket():
    # noise below the floor must not perturb the estimate
    rho, i_a, i_w = 3.0, 0.0, 50.0
    t = np.linspace(0.0, 4.0, 401)
    agg = i_a + (i_w - i_a) * np.exp(-rho * t)
    floor_zone = (agg - i_a) / (i_w - i_a) <= 0.05
    agg[floor_zone] = i_a + 0.02 * (i_w - i_a)
    tr = SimTrace(times=t, aggregates=agg,
                  active_counts=np.full_like(t, 10.0), n=10, delta_t=0.1)
    assert fit_exponential_decay(tr, i_a, i_w) == pytest.approx(rho, abs=1e-6)


def test_fit_error_cases():
    t = np.linspace(0.0, 1.0, 11)
    flat = SimTrace(times=t, aggregates=np.full_like(t, 5.0),
                    active_counts=np.full_like(t, 10.0), n=10, delta_t=0.1)
    with pytest.raises(FitError):
        fit_exponential_decay(flat, 5.0, 5.0)
    with pytest.raises(FitError):
        # bracket starts below the floor
        fit_exponential_decay(flat, 5.0, 500.0)
    spike = SimTrace(times=t,
                     aggregates=np.array([100.0] + [0.0] * 10),
                     active_counts=np.full_like(t, 10.0), n=10, delta_t=0.1)
    with pytest.raises(FitError):
        fit_exponential_decay(spike, 0.0, 100.0)


def test_steady_state_stats_hand_case():
    # replica means 1 and 3: grand mean 2, population variance 1, no
    # within-replica wiggle
    stats = steady_state_stats([_flat_trace(1.0), _flat_trace(3.0)],
                               warmup=0.0)
    assert stats.mean == pytest.approx(2.0)
    assert stats.variance == pytest.approx(1.0)
    assert stats.within == 0.0
    assert stats.replicas == 2
    assert stats.samples_per_replica == 10
    assert empirical_steady_state_variance(
        [_flat_trace(1.0), _flat_trace(3.0)], 0.0) == pytest.approx(1.0)


def test_steady_state_stats_normalizes_by_n():
    stats = steady_state_stats([_flat_trace(10.0, n=5), _flat_trace(30.0, n=5)],
                               warmup=0.0)
    assert stats.mean == pytest.approx(4.0)
    assert stats.variance == pytest.approx(4.0)


def test_steady_state_stats_errors():
    with pytest.raises(StatisticsError):
        steady_state_stats([_flat_trace(1.0)], warmup=0.0)
    with pytest.raises(StatisticsError):
        steady_state_stats([_flat_trace(1.0), _flat_trace(2.0)], warmup=10.0)
    with pytest.raises(StatisticsError):
        steady_state_stats([_flat_trace(1.0), _flat_trace(2.0)], warmup=0.0,
                           grid_dt=20.0)


def test_quiescent_ensemble_has_zero_variance():
    # alpha = 1 from a shared converged assignment: nothing ever moves
    top = make_uniform_linear_array(10, 1.0)
    state = SimState(top, uniform_random_assignment(10, 2,
                                                    np.random.default_rng(1)),
                     rng=np.random.default_rng(1))
    state, _ = run_to_convergence(state)
    converged = state.assignment()
    cfg = DynamicsConfig(delta_t=0.05, horizon=2.0, alpha=1.0, replicas=4)
    traces = run_ensemble(top, cfg, 2, base_seed=50, initial=converged)
    stats = steady_state_stats(traces, warmup=0.5)
    assert stats.variance == 0.0
    assert stats.within == pytest.approx(0.0, abs=1e-20)
    assert stats.mean == pytest.approx(state.aggregate() / 10.0)
