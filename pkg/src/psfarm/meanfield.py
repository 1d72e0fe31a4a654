"""Mean-field (large-farm) limit: stationary fixed point and transient dynamics.

The fraction of servers holding k jobs follows a deterministic ODE as the
farm grows; its stationary point is pinned down by inverting the Erlang loss
formula.  This module evaluates the fixed point, the level distribution
around an arbitrary mean, the drift field, and integrates trajectories.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import gammaln

from .model import LevelDistribution, SingularDriftError, as_level_distribution
from .special import erlang_b_inverse, truncated_exp_sum

_BOUNDARY_EPS = 1e-12


def fixed_point_mean(theta: int, rho: float) -> float:
    """Stationary mean number of jobs per server, c_hat.

    For rho <= 1 this is theta - rho * Erl_theta^{-1}(1 - rho); above
    rho = 1 every server saturates and the mean is theta.
    """
    if theta < 1:
        raise ValueError("theta must be >= 1")
    if rho <= 0:
        raise ValueError("rho must be > 0")
    if rho > 1:
        return float(theta)
    return theta - rho * erlang_b_inverse(theta, 1.0 - rho)


def psi(theta: int, rho: float, c: float) -> float:
    """Normalising sum psi(c) = g_theta((theta - c) / rho)."""
    if not 0 <= c <= theta:
        raise ValueError(f"mean occupancy must lie in [0, theta], got {c!r}")
    return truncated_exp_sum(theta, (theta - c) / rho)


def level_distribution(theta: int, rho: float, c: float) -> LevelDistribution:
    """Level distribution p(c) with weights x^(theta-k) / (theta-k)!, x = (theta-c)/rho.

    At c = c_hat this is the mean-field stationary point and its mean equals
    c; for other c the mean need not equal c.
    """
    if theta < 1:
        raise ValueError("theta must be >= 1")
    if rho <= 0:
        raise ValueError("rho must be > 0")
    if not 0 <= c <= theta:
        raise ValueError(f"mean occupancy must lie in [0, theta], got {c!r}")
    x = (theta - c) / rho
    k = np.arange(theta + 1)
    if x == 0.0:
        p = np.zeros(theta + 1)
        p[theta] = 1.0
    else:
        logw = (theta - k) * math.log(x) - gammaln(theta - k + 1)
        logw -= logw.max()
        p = np.exp(logw)
        p /= p.sum()
    return LevelDistribution(p)


def stationary_level_distribution(theta: int, rho: float) -> LevelDistribution:
    """p_hat = p(c_hat), the mean-field stationary level distribution."""
    return level_distribution(theta, rho, fixed_point_mean(theta, rho))


def mean_sojourn_meanfield(theta: int, rho: float) -> float:
    """(1/rho) * sum_i ((theta-i)/(theta-c_hat)) * i * p_hat_i for rho < 1.

    The sum itself is the mean occupancy a routed arrival finds at its target
    server, so the physical mean sojourn time of an accepted job is
    ``1 + rho * mean_sojourn_meanfield(...) = c_hat / rho`` (its own unit of
    service plus the backlog share); the simulator cross-checks use that
    identity.
    """
    if not 0 < rho < 1:
        raise ValueError("the sojourn expression presumes rho < 1 (c_hat < theta)")
    c_hat = fixed_point_mean(theta, rho)
    p_hat = level_distribution(theta, rho, c_hat).probs
    i = np.arange(theta + 1)
    return float(np.dot((theta - i) * i, p_hat) / (theta - c_hat) / rho)


def drift(theta: int, rho: float, y) -> np.ndarray:
    """Drift field of the level-fraction ODE at y.

    Components sum to zero.  At the saturated boundary (mean theta) the
    drift is zero when rho >= 1 (absorbing); for rho < 1 the equations are
    singular there and a SingularDriftError is raised.
    """
    dist = as_level_distribution(y, theta)
    p = dist.probs
    denom = theta - dist.mean
    if denom <= _BOUNDARY_EPS:
        if rho >= 1:
            return np.zeros(theta + 1)
        raise SingularDriftError(
            "drift is singular at the saturated boundary for rho < 1")
    return _drift_interior(theta, rho, p, denom)


def _drift_interior(theta: int, rho: float, p: np.ndarray, denom: float) -> np.ndarray:
    k = np.arange(theta)
    flow = rho * (theta - k) * p[:-1] / denom  # arrival flux level k -> k+1
    d = np.empty(theta + 1)
    d[0] = p[1] - flow[0]
    for j in range(1, theta):
        d[j] = flow[j - 1] - flow[j] + p[j + 1] - p[j]
    d[theta] = flow[theta - 1] - p[theta]
    return d


@dataclass(frozen=True)
class TrajectoryPoint:
    """A time point on an integrated mean-field trajectory."""

    time: float
    y: LevelDistribution


def integrate(theta: int, rho: float, y0, t_end: float, step: float = 0.01,
              record_every: int = 1) -> list[TrajectoryPoint]:
    """Fixed-step classical RK4 integration of the level-fraction ODE.

    The state is renormalised to the simplex after each step; a drift away
    from it beyond 1e-8 aborts with a step-size error.  For rho >= 1 the
    drift uses a guarded denominator so trajectories may touch the
    absorbing saturated boundary.
    """
    if step <= 0:
        raise ValueError("step must be > 0")
    if t_end < 0:
        raise ValueError("t_end must be >= 0")
    dist0 = as_level_distribution(y0, theta)
    kvec = np.arange(theta + 1)

    def f(p):
        denom = theta - float(np.dot(kvec, p))
        if denom <= _BOUNDARY_EPS:
            if rho >= 1:
                return np.zeros(theta + 1)
            raise SingularDriftError(
                "trajectory reached the saturated boundary with rho < 1")
        return _drift_interior(theta, rho, p, denom)

    y = dist0.probs.copy()
    points = [TrajectoryPoint(0.0, dist0)]
    n_steps = int(round(t_end / step))
    for i in range(1, n_steps + 1):
        k1 = f(y)
        k2 = f(y + 0.5 * step * k1)
        k3 = f(y + 0.5 * step * k2)
        k4 = f(y + step * k3)
        y = y + (step / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        total = y.sum()
        if abs(total - 1.0) > 1e-8 or y.min() < -1e-8:
            raise ValueError(
                f"integration left the simplex at t={i * step:.3f} "
                f"(sum={total!r}, min={y.min()!r}); reduce the step size")
        if abs(total - 1.0) > 1e-14 or y.min() < 0.0:
            y = np.clip(y, 0.0, None)
            y = y / y.sum()
        if i % record_every == 0 or i == n_steps:
            points.append(TrajectoryPoint(i * step, LevelDistribution(y)))
    return points


def fixed_point_residual(theta: int, rho: float) -> float:
    """Max-norm of the drift at the stationary point p_hat; ~0 up to roundoff."""
    p_hat = stationary_level_distribution(theta, rho)
    return float(np.max(np.abs(drift(theta, rho, p_hat))))
