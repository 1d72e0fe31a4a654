"""Large-farm laws for blocking and occupancy fluctuations.

Covers the three load regimes: exponentially small blocking below capacity
(saddle-point form), the polynomial critical window around full load with
its staffing rule, and the order-one overload regime with its geometric
spare-server law.  Also the Gaussian fluctuation covariance and the
large-deviation rate functional of the occupancy empirical measure.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .meanfield import fixed_point_mean, level_distribution, psi
from .model import StaffingRangeError, SystemConfig, as_level_distribution
from .special import gamma_alpha, phi_hat_log

REGIME_SUBCRITICAL = "subcritical"
REGIME_QED = "critical_qed"
REGIME_SUPERCRITICAL = "supercritical"


@dataclass(frozen=True)
class AsymptoticEstimate:
    """A blocking estimate with its regime tag and neglected-order note."""

    value: float
    regime: str
    order_term: str

    def __post_init__(self):
        if not 0 < self.value < 1:
            raise ValueError(f"blocking estimate outside (0, 1): {self.value!r}")


def blocking_subcritical(config: SystemConfig) -> AsymptoticEstimate:
    """B ~ exp(-n R(gamma)) * sqrt(alpha / (2 pi n)) for rho < 1.

    Saddle-point evaluation of the integral transform of the normalising
    constant; relative error O(1/n).
    """
    if not 0 < config.rho < 1:
        raise ValueError("sub-critical estimate needs 0 < rho < 1")
    data = gamma_alpha(config.theta, config.rho)
    log_b = (-config.n * data.r_at_gamma
             + 0.5 * (math.log(data.alpha) - math.log(2.0 * math.pi * config.n)))
    return AsymptoticEstimate(math.exp(log_b), REGIME_SUBCRITICAL,
                              "relative error O(1/n)")


def blocking_supercritical(config: SystemConfig) -> AsymptoticEstimate:
    """B ~ 1 - 1/rho + ((rho-1) n)^(-theta) for rho > 1 with n(rho-1) >= 1.

    Boundary (endpoint) expansion of the integral transform; the constant on
    the n^(-theta) term follows the published two-term form.
    """
    rho, n, theta = config.rho, config.n, config.theta
    if rho <= 1:
        raise ValueError("super-critical estimate needs rho > 1")
    if n * (rho - 1) < 1:
        raise ValueError("expansion needs n*(rho-1) bounded away from 0 (>= 1)")
    value = 1.0 - 1.0 / rho + ((rho - 1.0) * n) ** (-theta)
    return AsymptoticEstimate(value, REGIME_SUPERCRITICAL,
                              f"absolute error o(n^-{theta})")


def blocking_qed(n: int, theta: int, a: float) -> AsymptoticEstimate:
    """Critical-window blocking for total load n*rho = n + a*n^(1/(theta+1)).

    B ~ [n^(theta/(theta+1)) * Phi_hat_theta(0; -a)]^(-1); negative ``a``
    (spare capacity) enlarges the kernel integral and shrinks blocking.
    """
    if n < 1 or theta < 1:
        raise ValueError("need n >= 1 and theta >= 1")
    log_b = -(theta / (theta + 1.0)) * math.log(n) - phi_hat_log(theta, 0.0, -a)
    return AsymptoticEstimate(math.exp(log_b), REGIME_QED,
                              "relative o(1) inside the critical window")


def blocking_asymptotic(config: SystemConfig) -> AsymptoticEstimate:
    """Regime-dispatched blocking estimate.

    rho < 1 uses the saddle-point form, rho = 1 the critical window at
    a = 0, rho > 1 the overload expansion (falling back to the window
    estimate when n*(rho-1) < 1, where that expansion is invalid).
    """
    if config.rho < 1:
        return blocking_subcritical(config)
    if config.rho == 1:
        return blocking_qed(config.n, config.theta, 0.0)
    if config.n * (config.rho - 1) >= 1:
        try:
            return blocking_supercritical(config)
        except ValueError:
            pass  # overload too thin: the two-term form left (0, 1)
    a = (config.rho - 1.0) * config.n ** (config.theta / (config.theta + 1.0))
    return blocking_qed(config.n, config.theta, a)


def staffing(arrival_rate: float, theta: int, target_b: float) -> int:
    """Smallest-scale server count n = ceil(lam + a*lam^(1/(theta+1))) hitting a target blocking.

    The spare-capacity coefficient a solves
    [lam^(theta/(theta+1)) * Phi_hat_theta(0; a)]^(-1) = target_b by
    bisection on a in [-50, 50] (the kernel integral is increasing in a),
    with one fixed-point refinement replacing lam by the first-pass n.
    """
    if arrival_rate <= 0:
        raise ValueError("arrival rate must be > 0")
    if not 0 < target_b < 1:
        raise ValueError("target blocking must lie in (0, 1)")
    if theta < 1:
        raise ValueError("theta must be >= 1")
    log_target = math.log(target_b)
    lo, hi = -50.0, 50.0

    def solve_a(scale: float) -> float:
        def log_b(a):
            return -(theta / (theta + 1.0)) * math.log(scale) - phi_hat_log(theta, 0.0, a)

        if not log_b(hi) <= log_target <= log_b(lo):
            raise StaffingRangeError(
                f"target blocking {target_b} unreachable with a in [{lo}, {hi}] "
                f"at offered load {arrival_rate}")
        a_lo, a_hi = lo, hi
        for _ in range(80):
            mid = 0.5 * (a_lo + a_hi)
            if log_b(mid) > log_target:
                a_lo = mid
            else:
                a_hi = mid
        return 0.5 * (a_lo + a_hi)

    a = solve_a(arrival_rate)
    n1 = arrival_rate + a * arrival_rate ** (1.0 / (theta + 1.0))
    if n1 < 1:
        raise StaffingRangeError(
            f"target blocking {target_b} needs a non-positive server count "
            f"at offered load {arrival_rate}")
    a2 = solve_a(n1)
    n = math.ceil(arrival_rate + a2 * n1 ** (1.0 / (theta + 1.0)))
    if n < 1:
        raise StaffingRangeError(
            f"target blocking {target_b} needs a non-positive server count "
            f"at offered load {arrival_rate}")
    return int(n)


@dataclass(frozen=True)
class CltResult:
    """Gaussian fluctuation structure of (S_0, ..., S_{theta-1}) around n*p_hat."""

    sigma_inv: np.ndarray
    sigma: np.ndarray


def clt_covariance(theta: int, rho: float) -> CltResult:
    """Inverse covariance of the sqrt(n)-scaled occupancy fluctuations, rho < 1.

    Sigma^{-1} = psi_hat * 11' - vv'/(theta - c_hat) + diag(1/p_hat_k),
    with v = (theta, theta-1, ..., 1) on levels 0..theta-1.
    """
    if not 0 < rho < 1:
        raise ValueError("the Gaussian regime needs 0 < rho < 1")
    c_hat = fixed_point_mean(theta, rho)
    p_hat = level_distribution(theta, rho, c_hat).probs
    psi_hat = psi(theta, rho, c_hat)
    v = np.arange(theta, 0, -1, dtype=float)
    sigma_inv = (psi_hat * np.ones((theta, theta))
                 - np.outer(v, v) / (theta - c_hat)
                 + np.diag(1.0 / p_hat[:theta]))
    sigma_inv = 0.5 * (sigma_inv + sigma_inv.T)
    try:
        np.linalg.cholesky(sigma_inv)
    except np.linalg.LinAlgError as exc:
        raise ArithmeticError("fluctuation precision matrix is not positive definite") from exc
    sigma = np.linalg.inv(sigma_inv)
    if np.max(np.abs(sigma @ sigma_inv - np.eye(theta))) > 1e-8:
        raise ArithmeticError("covariance inversion lost precision beyond 1e-8")
    return CltResult(sigma_inv=sigma_inv, sigma=sigma)


def md_tail(theta: int, z: float) -> float:
    """Limit of P(S_{theta-1} / n^(theta/(theta+1)) > z) at critical load.

    Equals Phi_hat_theta(z; 0) / Phi_hat_theta(0; 0); 2*(1 - Phi(z)) when
    theta = 1.
    """
    if z < 0:
        raise ValueError("z must be >= 0")
    return math.exp(phi_hat_log(theta, z, 0.0) - phi_hat_log(theta, 0.0, 0.0))


def geometric_law(rho: float, k: int) -> float:
    """Limit law of the number of servers one job below full in overload.

    P(S_{theta-1} = k) = (1 - 1/rho) * rho^(-k) on k = 0, 1, 2, ...
    """
    if rho <= 1:
        raise ValueError("the geometric law holds for rho > 1")
    if k < 0 or k != int(k):
        raise ValueError("k must be a non-negative integer")
    return (1.0 - 1.0 / rho) * rho ** (-int(k))


def ld_rate(config: SystemConfig, q) -> float:
    """Large-deviation rate of observing level fractions q instead of p_hat.

    Returns (c - c_hat) + log(psi(c)/psi(c_hat)) - KL(q || p(c)) with
    c = mean(q); non-positive, and zero only at q = p_hat.  A q charging a
    level where p(c) vanishes yields -inf.
    """
    theta, rho = config.theta, config.rho
    if not 0 < rho < 1:
        raise ValueError("the large-deviation rate is defined for 0 < rho < 1")
    dist = as_level_distribution(q, theta)
    c = min(dist.mean, float(theta))
    c_hat = fixed_point_mean(theta, rho)
    p = level_distribution(theta, rho, c).probs
    qv = dist.probs
    support = qv > 0
    if np.any(p[support] == 0.0):
        return float("-inf")
    kl = float(np.sum(qv[support] * (np.log(qv[support]) - np.log(p[support]))))
    tilt = (c - c_hat) + math.log(psi(theta, rho, c) / psi(theta, rho, c_hat))
    return tilt - kl
