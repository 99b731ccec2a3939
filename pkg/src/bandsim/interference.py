"""Path-loss interference under a band assignment and activity pattern.

Conventions, used everywhere downstream:
  * weight of an active transmitter j at receiver i is p0 / dist[i][j]**eta;
  * inactive clusters neither radiate nor count as receivers in aggregates;
  * every per-band quantity excludes the receiving cluster's own emission.

Plain functions recompute from scratch (the O(N^2) oracle path); the
InterferenceCache keeps per-cluster per-band sums updated in O(N) per event
for the simulation inner loop.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .topology import Topology

__all__ = [
    "Assignment",
    "ActivityState",
    "all_band_one",
    "uniform_random_assignment",
    "all_active",
    "weight_matrix",
    "band_interference",
    "cluster_interference",
    "aggregate_interference",
    "worst_case_interference",
    "InterferenceCache",
]


@dataclass
class Assignment:
    """Band choice per cluster: entries in {1..r}."""

    bands: np.ndarray
    r: int

    def __post_init__(self):
        bands = np.asarray(self.bands, dtype=np.int64).copy()
        if bands.ndim != 1:
            raise ValueError("bands must be a 1-D vector")
        if self.r < 1:
            raise ValueError(f"band count r must be >= 1, got {self.r}")
        if bands.size and (bands.min() < 1 or bands.max() > self.r):
            raise ValueError(f"band entries must lie in 1..{self.r}")
        self.bands = bands

    @property
    def n(self) -> int:
        return self.bands.size

    def copy(self) -> "Assignment":
        return Assignment(self.bands.copy(), self.r)


@dataclass
class ActivityState:
    """Per-cluster on/off indicators plus the Markov persistence alpha."""

    active: np.ndarray
    alpha: float = 1.0

    def __post_init__(self):
        active = np.asarray(self.active, dtype=bool).copy()
        if active.ndim != 1:
            raise ValueError("active must be a 1-D boolean vector")
        if not (0.0 <= self.alpha <= 1.0):
            raise ValueError(f"alpha must lie in [0, 1], got {self.alpha}")
        self.active = active

    @property
    def n(self) -> int:
        return self.active.size

    def copy(self) -> "ActivityState":
        return ActivityState(self.active.copy(), self.alpha)


def all_band_one(n: int, r: int) -> Assignment:
    return Assignment(np.ones(n, dtype=np.int64), r)


def uniform_random_assignment(n: int, r: int, rng: np.random.Generator) -> Assignment:
    return Assignment(rng.integers(1, r + 1, size=n), r)


def all_active(n: int, alpha: float = 1.0) -> ActivityState:
    return ActivityState(np.ones(n, dtype=bool), alpha)


def weight_matrix(top: Topology) -> np.ndarray:
    """Pairwise path-loss weights p0/d^eta with a zero diagonal."""
    with np.errstate(divide="ignore"):
        w = top.p0 / top.dist ** top.eta
    np.fill_diagonal(w, 0.0)
    return w


def _check_lengths(top: Topology, asg: Assignment, act: ActivityState | None):
    if asg.n != top.n:
        raise ValueError(f"assignment length {asg.n} != topology size {top.n}")
    if act is not None and act.n != top.n:
        raise ValueError(f"activity length {act.n} != topology size {top.n}")


def band_interference(top: Topology, asg: Assignment, act: ActivityState | None,
                      i: int, k: int) -> float:
    """Power cluster i would receive on band k from active co-band others."""
    _check_lengths(top, asg, act)
    if not 0 <= i < top.n:
        raise ValueError(f"cluster index {i} out of range")
    if not 1 <= k <= asg.r:
        raise ValueError(f"band {k} out of range 1..{asg.r}")
    active = act.active if act is not None else np.ones(top.n, dtype=bool)
    mask = active & (asg.bands == k)
    mask[i] = False
    if not mask.any():
        return 0.0
    d = top.dist[i][mask]
    return float(np.sum(top.p0 / d ** top.eta))


def cluster_interference(top: Topology, asg: Assignment,
                         act: ActivityState | None, i: int) -> float:
    """Interference cluster i experiences on its own band."""
    return band_interference(top, asg, act, i, int(asg.bands[i]))


def aggregate_interference(top: Topology, asg: Assignment,
                           act: ActivityState | None = None) -> float:
    """Sum of cluster_interference over active clusters.

    By reciprocity this is twice the sum over unordered active co-band pairs.
    """
    _check_lengths(top, asg, act)
    active = act.active if act is not None else np.ones(top.n, dtype=bool)
    w = weight_matrix(top)
    co = (asg.bands[:, None] == asg.bands[None, :]) \
        & active[:, None] & active[None, :]
    np.fill_diagonal(co, False)
    return float(w[co].sum())


def worst_case_interference(top: Topology, act: ActivityState | None = None) -> float:
    """Aggregate with every active cluster forced co-band."""
    if act is not None and act.n != top.n:
        raise ValueError(f"activity length {act.n} != topology size {top.n}")
    active = act.active if act is not None else np.ones(top.n, dtype=bool)
    w = weight_matrix(top)
    co = active[:, None] & active[None, :]
    np.fill_diagonal(co, False)
    return float(w[co].sum())


class InterferenceCache:
    """Per-cluster per-band interference sums with O(N) event updates.

    _band_power[j, k] is the power cluster j would receive on band k+1 from
    the currently active transmitters (excluding j itself, whose weight to
    itself is zero).  Band switches and activity toggles adjust one weight
    column per event.  Owned by a single replica; not thread-safe.
    """

    def __init__(self, top: Topology, asg: Assignment, act: ActivityState | None = None):
        _check_lengths(top, asg, act)
        self.topology = top
        self.r = asg.r
        self.bands = asg.bands.copy()
        self.active = (act.active.copy() if act is not None
                       else np.ones(top.n, dtype=bool))
        self.weights = weight_matrix(top)
        self._band_power = np.zeros((top.n, asg.r))
        self._idx = np.arange(top.n)
        self.rebuild()

    @property
    def n(self) -> int:
        return self.bands.size

    def rebuild(self) -> None:
        """Full O(N^2) recompute of the cached sums."""
        masked = self.weights * self.active[None, :]
        for k in range(self.r):
            cols = self.bands == k + 1
            self._band_power[:, k] = masked[:, cols].sum(axis=1)

    def band_powers(self, i: int) -> np.ndarray:
        """All r band sums for cluster i (do not mutate)."""
        return self._band_power[i]

    def band_interference(self, i: int, k: int) -> float:
        return float(self._band_power[i, k - 1])

    def cluster_interference(self, i: int) -> float:
        return float(self._band_power[i, self.bands[i] - 1])

    def own_band_interference(self) -> np.ndarray:
        """Per-cluster interference on each cluster's own band."""
        return self._band_power[self._idx, self.bands - 1]

    def aggregate(self) -> float:
        return float(np.sum(self.own_band_interference(), where=self.active))

    def set_band(self, i: int, band: int) -> None:
        old = int(self.bands[i])
        if band == old:
            return
        if not 1 <= band <= self.r:
            raise ValueError(f"band {band} out of range 1..{self.r}")
        if self.active[i]:
            col = self.weights[:, i]
            self._band_power[:, old - 1] -= col
            self._band_power[:, band - 1] += col
        self.bands[i] = band

    def set_active(self, i: int, on: bool) -> None:
        if bool(self.active[i]) == bool(on):
            return
        col = self.weights[:, i]
        if on:
            self._band_power[:, self.bands[i] - 1] += col
        else:
            self._band_power[:, self.bands[i] - 1] -= col
        self.active[i] = bool(on)

    def assignment(self) -> Assignment:
        return Assignment(self.bands.copy(), self.r)

    def activity(self, alpha: float = 1.0) -> ActivityState:
        return ActivityState(self.active.copy(), alpha)
