"""Asynchronous best-response band updates.

Each scheduled cluster moves to the band where it currently measures the
least interference; by reciprocity every switch strictly lowers the network
aggregate, which therefore acts as a Lyapunov potential and guarantees
convergence to a local minimum.

Switching uses a strict-improvement rule: the current band is kept unless
some band beats it by more than REL_TOL relative (absolute floor 1), which
rules out oscillation between equal-interference states.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .interference import (ActivityState, Assignment, InterferenceCache,
                           all_active)
from .topology import Topology

__all__ = [
    "REL_TOL",
    "ConvergenceError",
    "SchedulingError",
    "SimState",
    "UpdateRecord",
    "PoissonClock",
    "RandomPermutationRounds",
    "schedule_next",
    "best_band",
    "apply_update",
    "default_update_guard",
    "run_to_convergence",
]

# Strict-improvement threshold: switch only if the best band improves on the
# current one by more than REL_TOL * max(1, current level).
REL_TOL = 1e-9


class ConvergenceError(RuntimeError):
    """Update-count guard exceeded; indicates a tie-breaking/tolerance bug."""


class SchedulingError(RuntimeError):
    """No active cluster available to schedule."""


class SimState:
    """Mutable per-replica simulation state.

    Owns the incremental interference cache; band and activity changes must
    go through set_band/set_active (or apply_update) to keep it consistent.
    """

    def __init__(self, topology: Topology, assignment: Assignment,
                 activity: ActivityState | None = None,
                 rng: np.random.Generator | None = None):
        if activity is None:
            activity = all_active(topology.n)
        self.topology = topology
        self.cache = InterferenceCache(topology, assignment, activity)
        self.alpha = activity.alpha
        self.rng = rng if rng is not None else np.random.default_rng()
        self.epoch = 0
        self.time = 0.0

    @property
    def n(self) -> int:
        return self.topology.n

    @property
    def r(self) -> int:
        return self.cache.r

    @property
    def bands(self) -> np.ndarray:
        return self.cache.bands

    @property
    def active(self) -> np.ndarray:
        return self.cache.active

    def assignment(self) -> Assignment:
        return self.cache.assignment()

    def activity(self) -> ActivityState:
        return self.cache.activity(self.alpha)

    def aggregate(self) -> float:
        return self.cache.aggregate()

    def set_band(self, i: int, band: int) -> None:
        self.cache.set_band(i, band)

    def set_active(self, i: int, on: bool) -> None:
        self.cache.set_active(i, on)

    def active_indices(self) -> np.ndarray:
        return np.flatnonzero(self.cache.active)


@dataclass
class UpdateRecord:
    """One applied update: who moved where and the potential before/after."""

    epoch: int
    time: float
    cluster: int
    old_band: int
    new_band: int
    aggregate_before: float
    aggregate_after: float

    @property
    def switched(self) -> bool:
        return self.new_band != self.old_band


def best_band(state: SimState, i: int) -> int:
    """Band with the least measured interference for active cluster i.

    The current band wins unless a strictly better one exists (beyond
    REL_TOL); among strictly better bands the lowest-interference one is
    chosen, ties broken by lowest band index.
    """
    if not state.cache.active[i]:
        raise ValueError(f"cluster {i} is inactive")
    powers = state.cache.band_powers(i)
    current = int(state.cache.bands[i])
    cur_val = powers[current - 1]
    best = int(np.argmin(powers))
    if cur_val - powers[best] <= REL_TOL * max(1.0, cur_val):
        return current
    return best + 1


def apply_update(state: SimState, i: int) -> UpdateRecord:
    """Apply the best-band rule at cluster i and log the potential change."""
    before = state.cache.aggregate()
    old = int(state.cache.bands[i])
    new = best_band(state, i)
    state.cache.set_band(i, new)
    after = state.cache.aggregate()
    state.epoch += 1
    return UpdateRecord(epoch=state.epoch, time=state.time, cluster=i,
                        old_band=old, new_band=new,
                        aggregate_before=before, aggregate_after=after)


def _pick_uniform_active(state: SimState) -> int:
    idx = state.active_indices()
    if idx.size == 0:
        raise SchedulingError("no active clusters to schedule")
    return int(idx[state.rng.integers(idx.size)])


@dataclass
class PoissonClock:
    """Network-wide Poisson update clock with mean inter-event time delta_t;
    each event updates one uniformly chosen active cluster."""

    delta_t: float

    def __post_init__(self):
        if not (self.delta_t > 0):
            raise ValueError(f"delta_t must be > 0, got {self.delta_t}")

    def next(self, state: SimState) -> tuple[int, float]:
        dt = float(state.rng.exponential(self.delta_t))
        return _pick_uniform_active(state), dt


class RandomPermutationRounds:
    """Rounds of updates, each round a fresh uniform shuffle of the active
    clusters; every active cluster appears exactly once per round."""

    def __init__(self, delta_t: float = 1.0):
        if not (delta_t > 0):
            raise ValueError(f"delta_t must be > 0, got {delta_t}")
        self.delta_t = delta_t
        self._order: np.ndarray = np.empty(0, dtype=np.int64)
        self._pos = 0

    def next(self, state: SimState) -> tuple[int, float]:
        if self._pos >= self._order.size:
            idx = state.active_indices()
            if idx.size == 0:
                raise SchedulingError("no active clusters to schedule")
            self._order = state.rng.permutation(idx)
            self._pos = 0
        i = int(self._order[self._pos])
        self._pos += 1
        return i, self.delta_t

    def at_round_boundary(self) -> bool:
        return self._pos >= self._order.size


def schedule_next(scheduler, state: SimState) -> tuple[int, float]:
    """(cluster index, time advance) for the next update event."""
    return scheduler.next(state)


def default_update_guard(n: int, eta: float) -> int:
    """Update budget 10*N^(eta+2); convergence needs polynomially many."""
    return max(1, int(10.0 * float(n) ** (eta + 2.0)))


def run_to_convergence(state: SimState, scheduler=None,
                       max_updates: int | None = None
                       ) -> tuple[SimState, list[UpdateRecord]]:
    """Run updates under a fixed activity pattern until no cluster moves.

    Permutation scheduling converges when a full round applies zero
    switches; Poisson scheduling when 2 * n_active consecutive events apply
    none (each event hits any given cluster with chance 1/n_active, so a full
    coverage cannot be certified by a single round).  Raises
    ConvergenceError beyond max_updates (default 10*N^(eta+2)).
    """
    if scheduler is None:
        scheduler = RandomPermutationRounds()
    n_active = int(state.cache.active.sum())
    trace: list[UpdateRecord] = []
    if n_active == 0:
        return state, trace
    if max_updates is None:
        max_updates = default_update_guard(state.n, state.topology.eta)

    round_based = isinstance(scheduler, RandomPermutationRounds)
    switches_in_round = 0
    quiet_streak = 0
    quiet_needed = 2 * n_active
    while True:
        if len(trace) >= max_updates:
            raise ConvergenceError(
                f"no convergence within {max_updates} updates "
                f"(n={state.n}, eta={state.topology.eta})")
        i, dt = scheduler.next(state)
        state.time += dt
        rec = apply_update(state, i)
        trace.append(rec)
        if round_based:
            if rec.switched:
                switches_in_round += 1
            if scheduler.at_round_boundary():
                if switches_in_round == 0:
                    break
                switches_in_round = 0
        else:
            quiet_streak = 0 if rec.switched else quiet_streak + 1
            if quiet_streak >= quiet_needed:
                break
    return state, trace
