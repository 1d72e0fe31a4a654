"""Shared domain types and error classes for the server-farm toolkit."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


class StateSpaceTooLarge(ValueError):
    """Exact enumeration would exceed the configured state cap."""


class QuadratureError(RuntimeError):
    """Adaptive quadrature could not reach the requested tolerance."""


class SingularDriftError(ValueError):
    """Mean-field drift requested at its singular boundary (all servers full, rho < 1)."""


class StaffingRangeError(ValueError):
    """No staffing coefficient inside the search bracket meets the blocking target."""


@dataclass(frozen=True)
class SystemConfig:
    """A homogeneous farm: ``n`` processor-sharing servers, each with buffer
    depth ``theta``, offered load ``rho`` per server.

    Server speed and mean job size are normalised to 1, so the total Poisson
    arrival rate is ``n * rho``.
    """

    n: int
    theta: int
    rho: float

    def __post_init__(self):
        if not isinstance(self.n, (int, np.integer)) or self.n < 1:
            raise ValueError(f"n must be a positive integer, got {self.n!r}")
        if not isinstance(self.theta, (int, np.integer)) or self.theta < 1:
            raise ValueError(f"theta must be a positive integer, got {self.theta!r}")
        if not (isinstance(self.rho, (int, float, np.floating)) and math.isfinite(self.rho) and self.rho > 0):
            raise ValueError(f"rho must be a positive finite real, got {self.rho!r}")
        object.__setattr__(self, "n", int(self.n))
        object.__setattr__(self, "theta", int(self.theta))
        object.__setattr__(self, "rho", float(self.rho))

    @property
    def arrival_rate(self) -> float:
        """Total arrival rate ``n * rho``."""
        return self.n * self.rho


@dataclass(frozen=True)
class LevelDistribution:
    """Probability vector over per-server buffer levels ``0..theta``."""

    probs: np.ndarray

    def __post_init__(self):
        p = np.asarray(self.probs, dtype=float).copy()
        if p.ndim != 1 or p.size < 2:
            raise ValueError("level distribution needs at least two levels (theta >= 1)")
        if np.any(p < -1e-12) or not np.all(np.isfinite(p)):
            raise ValueError("level probabilities must be non-negative and finite")
        p[p < 0] = 0.0
        if abs(p.sum() - 1.0) > 1e-12:
            raise ValueError(f"level probabilities must sum to 1 within 1e-12, got {p.sum()!r}")
        p.flags.writeable = False
        object.__setattr__(self, "probs", p)

    @property
    def theta(self) -> int:
        return self.probs.size - 1

    @property
    def mean(self) -> float:
        """Mean number of jobs per server, sum_k k * probs_k."""
        return float(np.dot(np.arange(self.probs.size), self.probs))

    def __len__(self) -> int:
        return self.probs.size

    def __getitem__(self, k):
        return self.probs[k]


def as_level_distribution(q, theta: int | None = None) -> LevelDistribution:
    """Coerce an array-like (or pass through a LevelDistribution) and optionally check its length."""
    dist = q if isinstance(q, LevelDistribution) else LevelDistribution(np.asarray(q, dtype=float))
    if theta is not None and dist.theta != theta:
        raise ValueError(f"expected {theta + 1} levels, got {dist.theta + 1}")
    return dist


@dataclass(frozen=True)
class OccupancyVector:
    """Counts ``s = (s_0, ..., s_theta)`` of servers holding 0..theta jobs."""

    counts: tuple[int, ...]

    def __post_init__(self):
        c = tuple(int(v) for v in self.counts)
        if len(c) < 2 or any(v < 0 for v in c):
            raise ValueError(f"invalid occupancy counts {self.counts!r}")
        object.__setattr__(self, "counts", c)

    @property
    def theta(self) -> int:
        return len(self.counts) - 1

    @property
    def n(self) -> int:
        return sum(self.counts)

    @property
    def total_jobs(self) -> int:
        return sum(k * v for k, v in enumerate(self.counts))


def as_state(s) -> np.ndarray:
    """Coerce a state (OccupancyVector, tuple or array) to an int64 vector."""
    if isinstance(s, OccupancyVector):
        return np.asarray(s.counts, dtype=np.int64)
    arr = np.asarray(s)
    if arr.ndim != 1:
        raise ValueError("occupancy state must be a flat vector of counts")
    if not np.all(arr == np.floor(arr)):
        raise ValueError("occupancy counts must be integers")
    out = arr.astype(np.int64)
    if np.any(out < 0):
        raise ValueError("occupancy counts must be non-negative")
    return out
