"""Time-varying activity: Markov on/off churn over the update process.

Update events arrive as a network-wide Poisson process of rate 1/delta_t;
at every event each cluster's on/off state advances one step of a symmetric
two-state Markov chain (stay with probability alpha), then one uniformly
chosen active cluster applies the best-band rule.  The ensemble mean of the
aggregate relaxes exponentially with rate rho/tau (tau = N*delta_t), and in
steady state the variance follows a closed-form prediction gated by the
stability margin 8*(1-alpha)/rho < 1.

Seed discipline: replica k of an ensemble uses base_seed + k; within one
replica, SeedSequence(seed).spawn(2) yields the scheduling stream and the
activity stream, so alpha=1 runs are event-for-event identical to the static
engine driven by the scheduling stream alone.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .allocation import SimState, apply_update
from .interference import ActivityState, Assignment, all_band_one
from .topology import Topology

__all__ = [
    "DynamicsConfig",
    "SimTrace",
    "DynamicsPrediction",
    "FitError",
    "StatisticsError",
    "SteadyStateStats",
    "replica_streams",
    "markov_toggle_all",
    "lambda_from_alpha",
    "stability_margin",
    "default_warmup",
    "simulate_time_varying",
    "run_ensemble",
    "sample_on_grid",
    "ensemble_mean_trace",
    "fit_exponential_decay",
    "predicted_variance",
    "empirical_steady_state_variance",
    "steady_state_stats",
]

DEFAULT_RHO = 3.0
# Fraction of the initial gap below which the decay fit stops trusting the
# ensemble mean (noise floor).
FIT_FLOOR = 0.05


class FitError(RuntimeError):
    """Decay fit impossible (degenerate or too-short bracket)."""


class StatisticsError(RuntimeError):
    """Not enough post-warmup samples for a variance estimate."""


@dataclass
class DynamicsConfig:
    """Event-simulation parameters for one time-varying run."""

    delta_t: float
    horizon: float
    alpha: float = 1.0
    replicas: int = 1
    warmup: float | None = None

    def __post_init__(self):
        if not (self.delta_t > 0):
            raise ValueError(f"delta_t must be > 0, got {self.delta_t}")
        if not (self.horizon > 0):
            raise ValueError(f"horizon must be > 0, got {self.horizon}")
        if not (0.0 <= self.alpha <= 1.0):
            raise ValueError(f"alpha must lie in [0, 1], got {self.alpha}")
        if self.replicas < 1:
            raise ValueError(f"replicas must be >= 1, got {self.replicas}")
        if self.warmup is not None and not (self.warmup < self.horizon):
            raise ValueError(
                f"warmup {self.warmup} must be below horizon {self.horizon}")

    def tau(self, n: int) -> float:
        return n * self.delta_t


@dataclass
class SimTrace:
    """Aggregate-interference time series of one replica (or ensemble mean).

    Event rows: times[0] = 0 is the initial snapshot (cluster -1, bands 0);
    later rows record (post-event aggregate, active count) per event.  A
    cluster value of -1 after t=0 marks an event with an empty active set.
    """

    times: np.ndarray
    aggregates: np.ndarray
    active_counts: np.ndarray
    n: int
    delta_t: float
    clusters: np.ndarray | None = None
    old_bands: np.ndarray | None = None
    new_bands: np.ndarray | None = None
    final_bands: np.ndarray | None = None
    seed: int | None = None

    @property
    def tau(self) -> float:
        return self.n * self.delta_t

    @property
    def events(self) -> int:
        return max(0, self.times.size - 1)


@dataclass
class DynamicsPrediction:
    """Steady-state prediction at a given operating level i_a."""

    rho: float
    tau: float
    lam: float
    margin: float
    sigma_ss_sq: float

    @property
    def divergent(self) -> bool:
        return self.margin >= 1.0


def replica_streams(seed: int) -> tuple[np.random.Generator, np.random.Generator]:
    """(scheduling stream, activity stream) for one replica seed."""
    sched_seq, act_seq = np.random.SeedSequence(seed).spawn(2)
    return (np.random.Generator(np.random.PCG64(sched_seq)),
            np.random.Generator(np.random.PCG64(act_seq)))


def markov_toggle_all(act: ActivityState, rng: np.random.Generator) -> ActivityState:
    """One step of the symmetric two-state chain for every cluster."""
    flips = rng.random(act.n) < (1.0 - act.alpha)
    return ActivityState(act.active ^ flips, act.alpha)


def lambda_from_alpha(alpha: float, n: int, tau: float) -> float:
    """Poisson rate of on/off transitions in each direction."""
    if not (tau > 0):
        raise ValueError(f"tau must be > 0, got {tau}")
    return n * n * (1.0 - alpha) / (2.0 * tau)


def stability_margin(alpha: float, rho: float) -> float:
    """8*(1-alpha)/rho; below 1 the steady-state variance stays finite."""
    if not (rho > 0):
        raise ValueError(f"rho must be > 0, got {rho}")
    return 8.0 * (1.0 - alpha) / rho


def default_warmup(tau: float, rho: float = DEFAULT_RHO) -> float:
    """Several relaxation times: 10*tau/rho."""
    return 10.0 * tau / rho


def simulate_time_varying(top: Topology, cfg: DynamicsConfig, r: int,
                          seed: int,
                          initial: Assignment | None = None) -> SimTrace:
    """Event-driven run over [0, horizon] with Markov activity churn.

    All clusters start active (stationary split is reached by churn); a
    cluster switched off keeps its band and resumes with it.  Deterministic
    per seed.
    """
    if (1.0 - cfg.alpha) > 0.1:
        warnings.warn(
            f"alpha={cfg.alpha}: expected toggles per slot exceed 10% of the "
            "network; the near-equilibrium variance prediction is strained",
            RuntimeWarning, stacklevel=2)
    sched_rng, act_rng = replica_streams(seed)
    asg = initial if initial is not None else all_band_one(top.n, r)
    if asg.r != r:
        raise ValueError(f"initial assignment has r={asg.r}, expected {r}")
    state = SimState(top, asg, ActivityState(np.ones(top.n, dtype=bool),
                                             cfg.alpha), rng=sched_rng)
    n = top.n
    one_minus_alpha = 1.0 - cfg.alpha

    times = [0.0]
    aggregates = [state.aggregate()]
    active_counts = [n]
    clusters = [-1]
    old_bands = [0]
    new_bands = [0]

    t = 0.0
    while True:
        dt = float(state.rng.exponential(cfg.delta_t))
        if t + dt > cfg.horizon:
            break
        t += dt
        state.time = t
        if one_minus_alpha > 0.0:
            flips = act_rng.random(n) < one_minus_alpha
            for j in np.flatnonzero(flips):
                state.set_active(int(j), not state.active[j])
        idx = state.active_indices()
        if idx.size:
            i = int(idx[state.rng.integers(idx.size)])
            rec = apply_update(state, i)
            clusters.append(rec.cluster)
            old_bands.append(rec.old_band)
            new_bands.append(rec.new_band)
            aggregates.append(rec.aggregate_after)
        else:
            state.epoch += 1
            clusters.append(-1)
            old_bands.append(0)
            new_bands.append(0)
            aggregates.append(0.0)
        times.append(t)
        active_counts.append(int(state.active.sum()))

    return SimTrace(times=np.asarray(times), aggregates=np.asarray(aggregates),
                    active_counts=np.asarray(active_counts, dtype=float),
                    n=n, delta_t=cfg.delta_t,
                    clusters=np.asarray(clusters, dtype=np.int64),
                    old_bands=np.asarray(old_bands, dtype=np.int64),
                    new_bands=np.asarray(new_bands, dtype=np.int64),
                    final_bands=state.bands.copy(), seed=seed)


def run_ensemble(top: Topology, cfg: DynamicsConfig, r: int,
                 base_seed: int,
                 initial: Assignment | None = None) -> list[SimTrace]:
    """Independent replicas with seeds base_seed + k, k = 0..replicas-1."""
    return [simulate_time_varying(top, cfg, r, base_seed + k, initial=initial)
            for k in range(cfg.replicas)]


def sample_on_grid(trace: SimTrace, grid: np.ndarray) -> np.ndarray:
    """Piecewise-constant (right-continuous) aggregate values at grid times."""
    grid = np.asarray(grid, dtype=float)
    if grid.size and (grid.min() < trace.times[0]):
        raise ValueError("grid extends before the trace start")
    pos = np.searchsorted(trace.times, grid, side="right") - 1
    return trace.aggregates[pos]


def _active_on_grid(trace: SimTrace, grid: np.ndarray) -> np.ndarray:
    pos = np.searchsorted(trace.times, np.asarray(grid, dtype=float),
                          side="right") - 1
    return trace.active_counts[pos]


def ensemble_mean_trace(traces: list[SimTrace], grid: np.ndarray) -> SimTrace:
    """Mean aggregate and active count over replicas on a common time grid."""
    if not traces:
        raise ValueError("empty ensemble")
    grid = np.asarray(grid, dtype=float)
    agg = np.mean([sample_on_grid(tr, grid) for tr in traces], axis=0)
    act = np.mean([_active_on_grid(tr, grid) for tr in traces], axis=0)
    first = traces[0]
    return SimTrace(times=grid, aggregates=agg, active_counts=act,
                    n=first.n, delta_t=first.delta_t)


def fit_exponential_decay(ensemble_mean: SimTrace, i_a: float,
                          i_w: float) -> float:
    """Relaxation-rate estimate rho_hat from an alpha=1 ensemble mean.

    Least-squares line through log((mean(t) - i_a)/(i_w - i_a)) on the
    initial stretch where that bracket exceeds FIT_FLOOR; the slope is
    -rho_hat/tau.
    """
    if not (i_w > i_a):
        raise FitError(f"need i_w > i_a, got i_w={i_w}, i_a={i_a}")
    bracket = (ensemble_mean.aggregates - i_a) / (i_w - i_a)
    below = np.flatnonzero(bracket <= FIT_FLOOR)
    stop = below[0] if below.size else bracket.size
    if stop < 2:
        raise FitError(
            "degenerate trace: bracket is below the fit floor from the start")
    t = ensemble_mean.times[:stop]
    y = np.log(bracket[:stop])
    slope = np.polyfit(t, y, 1)[0]
    return float(-slope * ensemble_mean.tau)


def predicted_variance(i_a: float, lam: float, tau: float, n: int,
                       rho: float = DEFAULT_RHO) -> DynamicsPrediction:
    """Steady-state variance of the aggregate around level i_a.

    Finite only while margin = 16*lam*tau/(n^2*rho) < 1; at or beyond the
    boundary sigma_ss_sq is +inf and the divergent flag is set.
    """
    if lam < 0:
        raise ValueError(f"lam must be >= 0, got {lam}")
    if not (tau > 0 and rho > 0 and n >= 1):
        raise ValueError("need tau > 0, rho > 0, n >= 1")
    drive = 16.0 * lam * tau
    margin = drive / (n * n * rho)
    if margin < 1.0:
        sigma = i_a * i_a * drive / (n * n * rho - drive)
    else:
        sigma = math.inf
    return DynamicsPrediction(rho=rho, tau=tau, lam=lam, margin=margin,
                              sigma_ss_sq=sigma)


@dataclass
class SteadyStateStats:
    """Post-warmup statistics of the normalized aggregate.

    Per-replica time means are computed first on a common sampling grid, then
    pooled across the ensemble: variance is the population (ddof=0) variance
    of those per-replica means around the grand mean.  Scheduling noise that
    averages out within a replica is thereby removed; the activity-driven
    spread across replicas remains.  within (the mean per-replica time
    variance around each replica's own mean) is kept as a diagnostic.
    """

    mean: float
    variance: float
    within: float
    replicas: int
    samples_per_replica: int


def steady_state_stats(traces: list[SimTrace], warmup: float,
                       grid_dt: float | None = None) -> SteadyStateStats:
    """Post-warmup ensemble statistics on a regular sampling grid.

    Samples every grid_dt (default: the event scale delta_t) from warmup to
    the shortest replica horizon; aggregates are normalized by N before
    pooling.
    """
    if len(traces) < 2:
        raise StatisticsError("need at least 2 replicas")
    if grid_dt is None:
        grid_dt = traces[0].delta_t
    t_end = min(float(tr.times[-1]) for tr in traces)
    if not (warmup < t_end):
        raise StatisticsError(
            f"warmup {warmup} leaves no samples before t_end {t_end}")
    grid = np.arange(warmup, t_end, grid_dt)
    if grid.size < 2:
        raise StatisticsError("fewer than 2 post-warmup samples per replica")
    n = traces[0].n
    rows = np.stack([sample_on_grid(tr, grid) / n for tr in traces])
    rep_means = rows.mean(axis=1)
    grand = float(rep_means.mean())
    within = float(np.mean(rows.var(axis=1)))
    between = float(np.mean((rep_means - grand) ** 2))
    return SteadyStateStats(mean=grand, variance=between,
                            within=within,
                            replicas=len(traces),
                            samples_per_replica=int(grid.size))


def empirical_steady_state_variance(traces: list[SimTrace], warmup: float,
                                    grid_dt: float | None = None) -> float:
    """Variance of per-replica mean normalized aggregates after warmup."""
    return steady_state_stats(traces, warmup, grid_dt).variance
