"""Scalar special functions for the farm model.

Truncated exponential sums, the Erlang loss formula and its inverse, the
exponential decay rate of the blocking probability with its critical
quantities, and the heavy-tail kernel integral that governs the critical
load window.  Everything here is a pure function of its arguments.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import gammaln, logsumexp

from .model import QuadratureError

_LOG_TRUNC = math.log(1e-18)  # integrand cutoff relative to its peak


def truncated_exp_sum(theta: int, t: float) -> float:
    """g_theta(t) = sum_{k=0}^{theta} t^k / k!, evaluated in Horner form."""
    if theta < 0:
        raise ValueError("theta must be >= 0")
    if t < 0:
        raise ValueError("t must be >= 0")
    acc = 1.0
    for k in range(theta, 0, -1):
        acc = 1.0 + acc * t / k
    return acc


def log_truncated_exp_sum(theta: int, t: float) -> float:
    """log g_theta(t), safe for arguments where the plain sum would overflow."""
    if theta < 0:
        raise ValueError("theta must be >= 0")
    if t < 0:
        raise ValueError("t must be >= 0")
    if t == 0.0:
        return 0.0
    k = np.arange(theta + 1)
    return float(logsumexp(k * math.log(t) - gammaln(k + 1)))


def log_truncexp_expansion_residual(theta: int, t: float) -> float:
    """Residual of log g_theta(t) against its leading expansion t - t^(theta+1)/(theta+1)!.

    Only meaningful for small t; the magnitude is o(t^(theta+1)).
    """
    if not 0 < t <= 0.1:
        raise ValueError("residual is defined for 0 < t <= 0.1")
    # log1p on the Horner tail keeps full precision when g - 1 ~ t is tiny.
    gm1 = 0.0
    for k in range(theta, 0, -1):
        gm1 = (1.0 + gm1) * t / k
    h = math.log1p(gm1)
    return h - (t - t ** (theta + 1) / math.factorial(theta + 1))


def erlang_b(theta: int, a: float) -> float:
    """Erlang loss probability Erl_theta(a) = (a^theta/theta!) / g_theta(a).

    Evaluated in log space so large ``a`` and ``theta`` stay in range.
    """
    if theta < 1:
        raise ValueError("theta must be >= 1")
    if a < 0:
        raise ValueError("offered load must be >= 0")
    if a == 0.0:
        return 0.0
    log_top = theta * math.log(a) - gammaln(theta + 1)
    return float(math.exp(log_top - log_truncated_exp_sum(theta, a)))


def erlang_b_inverse(theta: int, b: float, tol: float = 1e-12) -> float:
    """The unique offered load ``a >= 0`` with Erl_theta(a) = b.

    Monotone bisection on a bracket grown geometrically from
    ``[0, max(1, theta/(1-b))]``; the blocking function is strictly
    increasing so this converges unconditionally.
    """
    if not 0 <= b < 1:
        raise ValueError(f"blocking must lie in [0, 1), got {b!r}")
    if b == 0.0:
        return 0.0
    hi = max(1.0, theta / (1.0 - b))
    while erlang_b(theta, hi) < b:
        hi *= 2.0
    lo = 0.0
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if erlang_b(theta, mid) < b:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def _log_g_ratio(theta_top: int, theta_bot: int, t: float) -> float:
    """g_{theta_top}(t) / g_{theta_bot}(t) with the convention g_m = 0 for m < 0."""
    if theta_top < 0:
        return 0.0
    return math.exp(log_truncated_exp_sum(theta_top, t) - log_truncated_exp_sum(theta_bot, t))


def rate_function(theta: int, rho: float, t: float, order: int = 0) -> float:
    """R(t) = log g_theta(t) - rho*t, or its first/second derivative.

    Derivatives use the identity g_theta' = g_{theta-1}; the second
    derivative is rearranged as e1*(1 - e1) - e2 with e1 = t^theta/(theta! g)
    and e2 = t^(theta-1)/((theta-1)! g), which avoids the catastrophic
    cancellation of the raw ratio form at small t.
    """
    if t < 0:
        raise ValueError("t must be >= 0")
    if order == 0:
        return log_truncated_exp_sum(theta, t) - rho * t
    if order == 1:
        return _log_g_ratio(theta - 1, theta, t) - rho
    if order == 2:
        if t == 0.0:
            return -1.0 if theta == 1 else 0.0
        log_g = log_truncated_exp_sum(theta, t)
        e1 = math.exp(theta * math.log(t) - gammaln(theta + 1) - log_g)
        e2 = math.exp((theta - 1) * math.log(t) - gammaln(theta) - log_g)
        return e1 * (1.0 - e1) - e2
    raise ValueError(f"order must be 0, 1 or 2, got {order!r}")


@dataclass(frozen=True)
class RateFunctionData:
    """Maximiser and curvature of the blocking decay rate for rho < 1."""

    gamma: float       # unique interior maximiser of R
    alpha: float       # curvature constant, -R''(gamma)/rho^2
    r_at_gamma: float  # R(gamma), the exponential decay rate of blocking


def gamma_alpha(theta: int, rho: float) -> RateFunctionData:
    """Critical quantities of R for a sub-critical load.

    gamma solves Erl_theta(gamma) = 1 - rho (equivalently R'(gamma) = 0)
    and alpha = ((1-rho)/rho) * (theta/(rho*gamma) - 1) > 0.
    """
    if not 0 < rho < 1:
        raise ValueError("gamma/alpha exist only for 0 < rho < 1; "
                         "use the critical-window or overload estimates otherwise")
    gamma = erlang_b_inverse(theta, 1.0 - rho)
    alpha = (1.0 - rho) / rho * (theta / (rho * gamma) - 1.0)
    r_at_gamma = rate_function(theta, rho, gamma, order=0)
    # Consistency guards: gamma must be a strict interior maximum.
    if abs(rate_function(theta, rho, gamma, order=1)) > 1e-9:
        raise ArithmeticError("maximiser of R failed its stationarity check")
    if rate_function(theta, rho, gamma, order=2) >= 0 or alpha <= 0:
        raise ArithmeticError("R is not strictly concave at its maximiser")
    return RateFunctionData(gamma=gamma, alpha=alpha, r_at_gamma=r_at_gamma)


# ---------------------------------------------------------------------------
# Adaptive quadrature
# ---------------------------------------------------------------------------

def _simpson(f, a, fa, b, fb):
    m = 0.5 * (a + b)
    fm = f(m)
    return m, fm, (b - a) / 6.0 * (fa + 4.0 * fm + fb)


def adaptive_simpson(f, a: float, b: float, rel_tol: float = 1e-10,
                     max_depth: int = 48) -> float:
    """Adaptive Simpson integration of ``f`` over ``[a, b]``.

    The tolerance is relative to the first whole-interval estimate, which is
    adequate for the non-negative unimodal integrands used here.  Raises
    QuadratureError if the recursion depth is exhausted before convergence.
    """
    if b <= a:
        return 0.0
    fa, fb = f(a), f(b)
    m, fm, whole = _simpson(f, a, fa, b, fb)
    eps = rel_tol * max(abs(whole), 1e-300)

    def recurse(a, fa, m, fm, b, fb, whole, eps, depth):
        lm, flm, left = _simpson(f, a, fa, m, fm)
        rm, frm, right = _simpson(f, m, fm, b, fb)
        delta = left + right - whole
        if depth > 2 and abs(delta) <= 15.0 * eps:
            return left + right + delta / 15.0
        if depth >= max_depth:
            raise QuadratureError(
                f"adaptive Simpson did not converge on [{a}, {b}] at depth {depth}")
        return (recurse(a, fa, lm, flm, m, fm, left, 0.5 * eps, depth + 1)
                + recurse(m, fm, rm, frm, b, fb, right, 0.5 * eps, depth + 1))

    return recurse(a, fa, m, fm, b, fb, whole, eps, 0)


def _golden_section_max(f, a: float, b: float, tol: float = 1e-12) -> float:
    """Maximiser of a unimodal f on [a, b] by golden-section search."""
    invphi = (math.sqrt(5.0) - 1.0) / 2.0
    x1 = b - invphi * (b - a)
    x2 = a + invphi * (b - a)
    f1, f2 = f(x1), f(x2)
    while b - a > tol * (1.0 + abs(a) + abs(b)):
        if f1 >= f2:
            b, x2, f2 = x2, x1, f1
            x1 = b - invphi * (b - a)
            f1 = f(x1)
        else:
            a, x1, f1 = x1, x2, f2
            x2 = a + invphi * (b - a)
            f2 = f(x2)
    return 0.5 * (a + b)


def log_integral_unimodal(log_f, lower: float, peak: float | None = None,
                          rel_tol: float = 1e-11) -> float:
    """log of integral_{lower}^{infty} exp(log_f(t)) dt for unimodal log_f.

    The peak is located by golden-section search (after growing an uphill
    bracket) unless supplied; the upper truncation point is doubled until the
    integrand falls below 1e-18 of its maximum, then the two sides of the
    peak are integrated by adaptive Simpson on the peak-shifted integrand.
    """
    if peak is None:
        step = 1.0
        x, fx = lower, log_f(lower)
        nxt = lower + step
        fn = log_f(nxt)
        while fn > fx:
            x, fx = nxt, fn
            step *= 2.0
            nxt = x + step
            fn = log_f(nxt)
        peak = _golden_section_max(log_f, lower if x == lower else x - step / 2.0, nxt)
        peak = max(peak, lower)
    f_peak = log_f(peak)

    width = max(1.0, abs(peak - lower), abs(peak) * 0.1)
    upper = peak + width
    while log_f(upper) - f_peak > _LOG_TRUNC:
        width *= 2.0
        upper = peak + width

    def g(t):
        return math.exp(log_f(t) - f_peak)

    total = adaptive_simpson(g, lower, peak, rel_tol=rel_tol)
    total += adaptive_simpson(g, peak, upper, rel_tol=rel_tol)
    if total <= 0.0 or not math.isfinite(total):
        raise QuadratureError("unimodal integral evaluated to a non-positive value")
    return f_peak + math.log(total)


# ---------------------------------------------------------------------------
# Critical-window kernel
# ---------------------------------------------------------------------------

def _phi_exponent_peak(theta: int, z: float, a: float) -> float:
    # Stationary point of a*u - u^(theta+1)/(theta+1)! on [z, inf).
    if a > 0:
        u = (a * math.factorial(theta)) ** (1.0 / theta)
    elif a < 0 and theta % 2 == 1:
        u = -((-a) * math.factorial(theta)) ** (1.0 / theta)
    else:
        u = 0.0
    return max(z, u)


def phi_hat_log(theta: int, z: float = 0.0, a: float = 0.0,
                rel_tol: float = 1e-10) -> float:
    """log of Phi_hat_theta(z; a) = int_z^inf exp(a*u - u^(theta+1)/(theta+1)!) du.

    Kept in log space so the staffing solver can use coefficients whose
    integral would overflow a double.
    """
    if theta < 1:
        raise ValueError("theta must be >= 1")
    fact = math.factorial(theta + 1)

    def f(u):
        return a * u - u ** (theta + 1) / fact

    peak = _phi_exponent_peak(theta, z, a)
    f_peak = f(peak)
    width = 1.0
    upper = peak + width
    while f(upper) - f_peak > _LOG_TRUNC:
        width *= 2.0
        upper = peak + width

    def g(u):
        return math.exp(f(u) - f_peak)

    total = adaptive_simpson(g, z, peak, rel_tol=rel_tol)
    total += adaptive_simpson(g, peak, upper, rel_tol=rel_tol)
    return f_peak + math.log(total)


def phi_hat(theta: int, z: float = 0.0, a: float = 0.0) -> float:
    """Phi_hat_theta(z; a), see phi_hat_log."""
    return math.exp(phi_hat_log(theta, z, a))
