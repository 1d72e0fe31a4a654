"""Discrete-event simulation of the farm under pluggable routing policies.

Servers are processor sharing with finite buffers; job sizes come from any
unit-mean law, which is the whole point: the balanced policy's stationary
behaviour must not depend on the law beyond its mean.  Replications are
independent streams (seed base_seed + index) and every run is reproducible
bit for bit for fixed inputs.
"""

from __future__ import annotations

import math
import time as _time
from dataclasses import dataclass, field

import numpy as np

from .model import SystemConfig
from .rng import stream_state

_POLICY_IDS = {"insensitive": 0, "jsq": 1, "jsqd": 2, "jiq": 3, "bernoulli": 4}
_DIST_IDS = {"exponential": 0, "deterministic": 1, "twopoint": 2, "custom": 2}

BLOCKED = None  # sentinel returned by route() when the arrival is lost


@dataclass(frozen=True)
class PolicyKind:
    """Routing policy selector; ``d`` is only meaningful for jsqd."""

    variant: str
    d: int = 0

    def __post_init__(self):
        if self.variant not in _POLICY_IDS:
            raise ValueError(f"unknown policy {self.variant!r}; "
                             f"choose from {sorted(_POLICY_IDS)}")
        if self.variant == "jsqd" and self.d < 1:
            raise ValueError("jsqd needs d >= 1")


@dataclass(frozen=True)
class JobSizeDist:
    """Unit-mean job-size law.

    The stock laws are exponential(1), deterministic(1) and the two-point
    law with atoms 0.1 and 10 (weights 9/9.9 and 0.9/9.9).  Custom discrete
    laws must have probabilities summing to 1 and mean 1 within 1e-12.
    """

    variant: str
    values: tuple = ()
    probs: tuple = ()

    def __post_init__(self):
        if self.variant not in _DIST_IDS:
            raise ValueError(f"unknown job-size law {self.variant!r}")
        if self.variant in ("twopoint", "custom"):
            v = np.asarray(self.values, dtype=float)
            p = np.asarray(self.probs, dtype=float)
            if v.size == 0 or v.size != p.size:
                raise ValueError("a discrete law needs matching values and probs")
            if np.any(v <= 0) or np.any(p < 0):
                raise ValueError("values must be positive, probabilities non-negative")
            if abs(p.sum() - 1.0) > 1e-12:
                raise ValueError("probabilities must sum to 1 within 1e-12")
            if abs(float(v @ p) - 1.0) > 1e-12:
                raise ValueError("job sizes must have mean 1 within 1e-12 "
                                 "(policies are compared at unit mean)")

    @classmethod
    def exponential(cls) -> "JobSizeDist":
        return cls("exponential")

    @classmethod
    def deterministic(cls) -> "JobSizeDist":
        return cls("deterministic")

    @classmethod
    def two_point(cls) -> "JobSizeDist":
        return cls("twopoint", values=(0.1, 10.0), probs=(9 / 9.9, 0.9 / 9.9))

    @classmethod
    def custom(cls, pairs) -> "JobSizeDist":
        values, probs = zip(*pairs)
        return cls("custom", values=tuple(values), probs=tuple(probs))

    def _tables(self):
        if self.variant in ("twopoint", "custom"):
            values = np.asarray(self.values, dtype=float)
            cum = np.cumsum(np.asarray(self.probs, dtype=float))
            cum[-1] = 2.0  # guard against cumsum rounding below a u ~ 1 draw
            return _DIST_IDS[self.variant], values, cum
        return _DIST_IDS[self.variant], np.empty(0), np.empty(0)


@dataclass(frozen=True)
class SimReport:
    """Post-warmup tallies of one replication."""

    arrivals: int
    blocked: int
    blocking_estimate: float
    sojourn_mean: float
    sojourn_se: float
    completed: int
    seed: int
    wall_clock: float


@dataclass(frozen=True)
class ExperimentReport:
    """Replication aggregate with normal-approximation 95% intervals."""

    replications: tuple[SimReport, ...]
    blocking_mean: float
    blocking_ci95: float
    sojourn_mean: float
    sojourn_ci95: float

    @property
    def wall_clock(self) -> float:
        return sum(r.wall_clock for r in self.replications)


def insensitive_probabilities(occupancies, theta: int) -> np.ndarray:
    """Routing law of the balanced policy: P(server i) = (theta - x_i) / sum_j (theta - x_j)."""
    x = np.asarray(occupancies, dtype=np.int64)
    if np.any(x < 0) or np.any(x > theta):
        raise ValueError("occupancies must lie in [0, theta]")
    gaps = (theta - x).astype(float)
    total = gaps.sum()
    if total == 0:
        return np.zeros(x.size)
    return gaps / total


def route(policy: PolicyKind, occupancies, theta: int, rng) -> int | None:
    """Pick a target server (or BLOCKED) for one arrival.

    ``rng`` is a numpy Generator.  This is a readable reference of the
    routing semantics; the jitted kernel implements the same rules over
    incremental bucket structures.
    """
    x = np.asarray(occupancies, dtype=np.int64)
    n = x.size
    if np.any(x < 0) or np.any(x > theta):
        raise ValueError("occupancies must lie in [0, theta]")
    if policy.variant == "insensitive":
        p = insensitive_probabilities(x, theta)
        if p.sum() == 0:
            return BLOCKED
        return int(np.searchsorted(np.cumsum(p), rng.uniform(), side="right"))
    if policy.variant == "jsq":
        open_servers = np.flatnonzero(x < theta)
        if open_servers.size == 0:
            return BLOCKED
        lows = open_servers[x[open_servers] == x[open_servers].min()]
        return int(rng.choice(lows))
    if policy.variant == "jsqd":
        if policy.d > n:
            raise ValueError("jsqd sample size d cannot exceed n")
        sample = rng.choice(n, size=policy.d, replace=False)
        low = x[sample].min()
        if low == theta:
            return BLOCKED
        return int(rng.choice(sample[x[sample] == low]))
    if policy.variant == "jiq":
        idle = np.flatnonzero(x == 0)
        if idle.size > 0:
            return int(rng.choice(idle))
        pick = int(rng.integers(n))
        return BLOCKED if x[pick] == theta else pick
    pick = int(rng.integers(n))  # bernoulli
    return BLOCKED if x[pick] == theta else pick


def _resolve(config: SystemConfig, policy: PolicyKind, server_speed, arrival_rate):
    if policy.variant == "jsqd" and policy.d > config.n:
        raise ValueError("jsqd sample size d cannot exceed n")
    speeds = np.full(config.n, float(server_speed))
    if np.any(speeds <= 0):
        raise ValueError("server speed must be > 0")
    lam = config.n * config.rho * float(server_speed) if arrival_rate is None else float(arrival_rate)
    if lam <= 0:
        raise ValueError("arrival rate must be > 0")
    return speeds, lam


def _run(config, policy, jobs, *, max_arrivals, warmup_arrivals, max_time,
         warmup_time, sample_period, snapshots, histogram, seed,
         server_speed, arrival_rate):
    from ._kernel import run_farm  # deferred: first import compiles the kernel

    speeds, lam = _resolve(config, policy, server_speed, arrival_rate)
    dist_id, values, cum = jobs._tables()
    snap = snapshots if snapshots is not None else np.empty((0, config.theta + 1), np.int64)
    hist = histogram if histogram is not None else np.empty(0, np.float64)
    state = stream_state(seed)
    return run_farm(config.n, config.theta, lam,
                    _POLICY_IDS[policy.variant], max(policy.d, 1),
                    dist_id, values, cum, speeds,
                    max_arrivals, warmup_arrivals,
                    max_time, warmup_time,
                    sample_period, snap, hist, state)


def run_replication(config: SystemConfig, policy: PolicyKind, jobs: JobSizeDist,
                    horizon_arrivals: int, warmup_arrivals: int | None = None,
                    seed: int = 0, *, server_speed: float = 1.0,
                    arrival_rate: float | None = None) -> SimReport:
    """One replication over a fixed arrival count.

    Statistics start after ``warmup_arrivals`` (default 20% of the horizon);
    sojourns are recorded for jobs admitted after warmup that complete
    before the horizon.  Deterministic for fixed inputs.
    """
    if warmup_arrivals is None:
        warmup_arrivals = horizon_arrivals // 5
    if not 0 <= warmup_arrivals < horizon_arrivals:
        raise ValueError("need horizon_arrivals > warmup_arrivals >= 0")
    t0 = _time.perf_counter()
    (arr, blocked, completed, soj_sum, soj_sq, _snaps, _t_end, _seen) = _run(
        config, policy, jobs, max_arrivals=horizon_arrivals,
        warmup_arrivals=warmup_arrivals, max_time=math.inf, warmup_time=0.0,
        sample_period=0.0, snapshots=None, histogram=None, seed=seed,
        server_speed=server_speed, arrival_rate=arrival_rate)
    wall = _time.perf_counter() - t0
    mean = soj_sum / completed if completed else math.nan
    if completed > 1:
        var = max(soj_sq / completed - mean * mean, 0.0)
        se = math.sqrt(var / completed)
    else:
        se = math.nan
    return SimReport(arrivals=int(arr), blocked=int(blocked),
                     blocking_estimate=blocked / arr if arr else math.nan,
                     sojourn_mean=mean, sojourn_se=se, completed=int(completed),
                     seed=seed, wall_clock=wall)


def run_experiment(config: SystemConfig, policy: PolicyKind, jobs: JobSizeDist,
                   replications: int, per_rep_arrivals: int, base_seed: int = 0,
                   *, warmup_arrivals: int | None = None, server_speed: float = 1.0,
                   arrival_rate: float | None = None) -> ExperimentReport:
    """Independent replications with seeds base_seed + index, aggregated.

    The 95% intervals are normal approximations over replication means.
    """
    if replications < 2:
        raise ValueError("need at least 2 replications for an interval")
    reps = tuple(
        run_replication(config, policy, jobs, per_rep_arrivals,
                        warmup_arrivals=warmup_arrivals, seed=base_seed + i,
                        server_speed=server_speed, arrival_rate=arrival_rate)
        for i in range(replications))
    blocking = np.array([r.blocking_estimate for r in reps])
    sojourn = np.array([r.sojourn_mean for r in reps])
    z = 1.959963984540054
    return ExperimentReport(
        replications=reps,
        blocking_mean=float(blocking.mean()),
        blocking_ci95=float(z * blocking.std(ddof=1) / math.sqrt(replications)),
        sojourn_mean=float(sojourn.mean()),
        sojourn_ci95=float(z * sojourn.std(ddof=1) / math.sqrt(replications)),
    )


def occupancy_snapshot_stream(config: SystemConfig, policy: PolicyKind,
                              jobs: JobSizeDist, *, t_end: float,
                              warmup_time: float, period: float, seed: int = 0,
                              server_speed: float = 1.0,
                              arrival_rate: float | None = None) -> np.ndarray:
    """Occupancy-count snapshots at times warmup_time + k*period, k = 1, 2, ...

    Returns an int64 array of shape (floor((t_end - warmup_time)/period),
    theta + 1); feeds the fluctuation/tail estimates.
    """
    if period <= 0:
        raise ValueError("sampling period must be > 0")
    if t_end <= warmup_time:
        raise ValueError("need t_end > warmup_time")
    count = int(math.floor((t_end - warmup_time) / period))
    snaps = np.zeros((count, config.theta + 1), np.int64)
    (*_head, snap_cnt, _t, _seen) = _run(
        config, policy, jobs, max_arrivals=2 ** 62, warmup_arrivals=2 ** 62,
        max_time=float(t_end), warmup_time=float(warmup_time),
        sample_period=float(period), snapshots=snaps, histogram=None,
        seed=seed, server_speed=server_speed, arrival_rate=arrival_rate)
    return snaps[:snap_cnt]


def state_time_histogram(config: SystemConfig, policy: PolicyKind,
                         jobs: JobSizeDist, *, t_end: float, warmup_time: float,
                         seed: int = 0, server_speed: float = 1.0,
                         arrival_rate: float | None = None) -> np.ndarray:
    """Time-weighted empirical state distribution over occupancy vectors.

    Entry ``sum_k s_k (n+1)^k`` holds the fraction of post-warmup time spent
    in state s; exact time weighting, no sampling error beyond run length.
    Only available while (n+1)^(theta+1) stays below ~4 million entries.
    """
    size = (config.n + 1) ** (config.theta + 1)
    if size > 1 << 22:
        raise ValueError("state histogram needs (n+1)^(theta+1) <= 2^22")
    hist = np.zeros(size, np.float64)
    _run(config, policy, jobs, max_arrivals=2 ** 62, warmup_arrivals=2 ** 62,
         max_time=float(t_end), warmup_time=float(warmup_time),
         sample_period=0.0, snapshots=None, histogram=hist, seed=seed,
         server_speed=server_speed, arrival_rate=arrival_rate)
    total = hist.sum()
    if total <= 0:
        raise RuntimeError("no post-warmup time accumulated")
    return hist / total


def state_code(state, n: int) -> int:
    """Index of an occupancy vector inside a state_time_histogram array."""
    return int(sum(int(v) * (n + 1) ** k for k, v in enumerate(state)))
