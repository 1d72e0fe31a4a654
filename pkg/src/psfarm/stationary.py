"""Exact finite-farm stationary analysis.

State enumeration over occupancy vectors, the closed-form reversible
stationary measure, blocking by direct normalisation and by the
generating-function integral transform, the routing rates, the balance
function of the routing rule, a generator-matrix oracle, and the multi-speed
generalisation at verification scale.

Everything is computed in log space: the factorials involved overflow
doubles almost immediately otherwise.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from itertools import combinations, product

import numpy as np
import scipy.sparse as sp
from scipy.special import gammaln, logsumexp
from scipy.sparse.linalg import spsolve

from .model import StateSpaceTooLarge, SystemConfig, as_state
from .special import log_integral_unimodal, log_truncated_exp_sum

DEFAULT_STATE_CAP = 5_000_000


def state_count(n: int, theta: int) -> int:
    """Number of occupancy states, C(n + theta, theta)."""
    return math.comb(n + theta, theta)


def enumerate_states(n: int, theta: int, cap: int = DEFAULT_STATE_CAP) -> np.ndarray:
    """All compositions of n into theta+1 ordered parts.

    Returned as an int64 array of shape (K, theta+1), ordered so the empty
    farm (n, 0, ..., 0) comes first and the saturated farm (0, ..., 0, n)
    last.  Raises StateSpaceTooLarge when K would exceed ``cap``.
    """
    if n < 0 or theta < 1:
        raise ValueError("need n >= 0 and theta >= 1")
    count = state_count(n, theta)
    if count > cap:
        raise StateSpaceTooLarge(
            f"enumeration of {count} states exceeds the cap of {cap}")
    cuts = np.fromiter(
        (c for combo in combinations(range(n + theta), theta) for c in combo),
        dtype=np.int64, count=count * theta).reshape(count, theta)
    states = np.empty((count, theta + 1), dtype=np.int64)
    states[:, 0] = cuts[:, 0]
    for i in range(1, theta):
        states[:, i] = cuts[:, i] - cuts[:, i - 1] - 1
    states[:, theta] = n + theta - 1 - cuts[:, theta - 1]
    return states[::-1].copy()


def total_jobs(states: np.ndarray) -> np.ndarray:
    """s_bar = sum_k k * s_k for one state or a stack of states."""
    arr = np.asarray(states)
    k = np.arange(arr.shape[-1])
    return arr @ k


def routing_rates(config: SystemConfig, s) -> np.ndarray:
    """Arrival rates lambda_i(s) = n*rho*(theta-i)*s_i / (n*theta - s_bar), i < theta.

    Returns the empty vector when every buffer is full (arrival blocked).
    The rates always sum to n*rho while any buffer space remains.
    """
    state = as_state(s)
    n, theta = config.n, config.theta
    if state.size != theta + 1 or state.sum() != n:
        raise ValueError(f"state {s!r} does not describe {n} servers with buffer {theta}")
    sbar = int(total_jobs(state))
    free = n * theta - sbar
    if free == 0:
        return np.empty(0)
    i = np.arange(theta)
    return config.arrival_rate * (theta - i) * state[:-1] / free


def stationary_log_prob(config: SystemConfig, s) -> float:
    """Unnormalised log stationary weight of occupancy state s.

    All states share one additive constant, fixed by summation over
    enumerate_states (see stationary_table); weight ratios between states
    are exact as returned.
    """
    state = as_state(s)
    n, theta = config.n, config.theta
    if state.size != theta + 1 or state.sum() != n:
        raise ValueError(f"state {s!r} does not describe {n} servers with buffer {theta}")
    k = np.arange(theta + 1)
    sbar = float(state @ k)
    log_nrho = math.log(config.arrival_rate)
    return float(
        gammaln(n * theta - sbar + 1)
        + gammaln(n + 1) - gammaln(state + 1).sum()
        + state @ ((k - theta) * log_nrho - gammaln(theta - k + 1))
    )


@dataclass(frozen=True)
class StationaryResult:
    """Normalised stationary measure over an explicit state enumeration."""

    states: np.ndarray      # (K, theta+1) int64, as returned by enumerate_states
    log_probs: np.ndarray   # (K,) normalised log probabilities
    blocking: float         # probability of the saturated state
    log_normalizer: float   # subtract from stationary_log_prob to normalise

    def index_of(self, s) -> int:
        state = as_state(s)
        matches = np.flatnonzero((self.states == state).all(axis=1))
        if matches.size != 1:
            raise KeyError(f"state {s!r} not in enumeration")
        return int(matches[0])

    def log_prob(self, s) -> float:
        return float(self.log_probs[self.index_of(s)])

    def probs(self) -> np.ndarray:
        return np.exp(self.log_probs)


def stationary_table(config: SystemConfig, cap: int = DEFAULT_STATE_CAP) -> StationaryResult:
    """Exact normalised stationary distribution by enumeration."""
    n, theta = config.n, config.theta
    states = enumerate_states(n, theta, cap=cap)
    k = np.arange(theta + 1)
    sbar = states @ k
    log_nrho = math.log(config.arrival_rate)
    logw = (gammaln(n * theta - sbar + 1)
            + gammaln(n + 1) - gammaln(states + 1).sum(axis=1)
            + states @ ((k - theta) * log_nrho - gammaln(theta - k + 1)))
    log_z = float(logsumexp(logw))
    log_probs = logw - log_z
    full = np.flatnonzero(states[:, theta] == n)
    blocking = float(np.exp(log_probs[full[0]]))
    return StationaryResult(states=states, log_probs=log_probs,
                            blocking=blocking, log_normalizer=log_z)


def exact_blocking_enumeration(config: SystemConfig, cap: int = DEFAULT_STATE_CAP) -> float:
    """Blocking probability: stationary mass of the all-full state."""
    return stationary_table(config, cap=cap).blocking


def blocking_via_integral(config: SystemConfig) -> float:
    """Blocking probability via the generating-function integral identity

        1/B = n*rho * int_0^inf g_theta(t)^n exp(-t*n*rho) dt,

    evaluated in log space with adaptive quadrature around the integrand's
    maximiser.  Exact (up to quadrature tolerance) for every n.
    """
    n, theta, rho = config.n, config.theta, config.rho
    nrho = config.arrival_rate

    def log_f(t):
        return n * log_truncated_exp_sum(theta, t) - t * nrho

    log_integral = log_integral_unimodal(log_f, 0.0)
    return math.exp(-(math.log(nrho) + log_integral))


def tasks_mgf(config: SystemConfig, z: float) -> float:
    """Moment generating function of the total number of jobs, E[z^(s_bar)].

    Uses the integral transform of the stationary measure; the coefficient
    of t^k/k! in the integrand carries z^(theta-k).  M(1) = 1 and M(0) is
    the probability of an empty farm.
    """
    if not 0 <= z <= 1:
        raise ValueError("z must lie in [0, 1]")
    n, theta = config.n, config.theta
    nrho = config.arrival_rate
    log_b = math.log(blocking_via_integral(config))
    if z == 0.0:
        # Only the t^theta/theta! term survives: a pure Gamma integral.
        return math.exp(log_b + gammaln(n * theta + 1)
                        - n * theta * math.log(nrho) - n * gammaln(theta + 1))

    def log_f(t):
        # sum_k t^k z^(theta-k) / k! = z^theta * g_theta(t/z)
        return n * (theta * math.log(z) + log_truncated_exp_sum(theta, t / z)) - t * nrho

    log_integral = log_integral_unimodal(log_f, 0.0)
    return math.exp(log_b + math.log(nrho) + log_integral)


def balance_function(theta_vec, x, lam: float) -> float:
    """Routing balance function Lambda(x) = multinomial(|theta-x|; theta-x) * lam^|x|.

    Defined on per-server job vectors x <= theta componentwise; the routing
    rates satisfy lambda_i(x) = Lambda(x + e_i)/Lambda(x).
    """
    tv = np.asarray(theta_vec, dtype=np.int64)
    xv = np.asarray(x, dtype=np.int64)
    if tv.shape != xv.shape or np.any(xv < 0) or np.any(xv > tv):
        raise ValueError("need 0 <= x <= theta componentwise")
    gaps = tv - xv
    coeff = math.factorial(int(gaps.sum()))
    for g in gaps:
        coeff //= math.factorial(int(g))
    return float(coeff) * lam ** int(xv.sum())


# ---------------------------------------------------------------------------
# Generator-matrix oracle
# ---------------------------------------------------------------------------

def generator_matrix(config: SystemConfig, cap: int = DEFAULT_STATE_CAP) -> sp.csr_matrix:
    """Infinitesimal generator over enumerate_states(config.n, config.theta).

    Off-diagonal rates: a server moves i-1 -> i at the routing rate
    lambda_{i-1}(s), and i+1 -> i at rate s_{i+1} (one departure per busy
    server per unit time).  Rows sum to zero.
    """
    n, theta = config.n, config.theta
    states = enumerate_states(n, theta, cap=cap)
    index = {tuple(row): i for i, row in enumerate(states)}
    rows, cols, data = [], [], []
    for i, s in enumerate(states):
        rates = routing_rates(config, s)
        for lvl in range(theta):          # arrival: one server lvl -> lvl+1
            if s[lvl] > 0 and rates.size:
                t = s.copy()
                t[lvl] -= 1
                t[lvl + 1] += 1
                rows.append(i)
                cols.append(index[tuple(t)])
                data.append(float(rates[lvl]))
        for lvl in range(1, theta + 1):   # departure: one server lvl -> lvl-1
            if s[lvl] > 0:
                t = s.copy()
                t[lvl] -= 1
                t[lvl - 1] += 1
                rows.append(i)
                cols.append(index[tuple(t)])
                data.append(float(s[lvl]))
    q = sp.csr_matrix((data, (rows, cols)), shape=(len(states), len(states)))
    diag = -np.asarray(q.sum(axis=1)).ravel()
    return (q + sp.diags(diag)).tocsr()


def stationary_from_generator(config: SystemConfig, cap: int = DEFAULT_STATE_CAP) -> np.ndarray:
    """Stationary probabilities solving pi Q = 0, sum(pi) = 1 by sparse elimination.

    Aligned with enumerate_states; serves as an independent oracle for the
    closed-form measure.
    """
    q = generator_matrix(config, cap=cap)
    k = q.shape[0]
    a = q.transpose().tolil()
    a[k - 1, :] = np.ones(k)
    b = np.zeros(k)
    b[k - 1] = 1.0
    pi = spsolve(a.tocsc(), b)
    return pi / pi.sum()


def dump_stationary_csv(result: StationaryResult, path) -> None:
    """Write the stationary table as CSV: s_0..s_theta, log_prob (17 digits)."""
    theta = result.states.shape[1] - 1
    header = ",".join(f"s_{k}" for k in range(theta + 1)) + ",log_prob"
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(header + "\n")
        for s, lp in zip(result.states, result.log_probs):
            fh.write(",".join(str(int(v)) for v in s) + f",{lp:.17g}\n")


# ---------------------------------------------------------------------------
# Heterogeneous (multi-speed) farms, verification scale
# ---------------------------------------------------------------------------

HETERO_STATE_CAP = 100_000


@dataclass(frozen=True)
class ServerClass:
    """A group of identical servers: count, speed and buffer depth."""

    count: int
    speed: float
    buffer: int

    def __post_init__(self):
        if self.count < 1 or self.buffer < 1 or self.speed <= 0:
            raise ValueError(f"invalid server class {self!r}")


@dataclass(frozen=True)
class HeteroConfig:
    """Multi-speed farm: server classes plus offered load rho per unit capacity.

    A class with speed c_j sees the reduced per-server load rho_j = rho/c_j.
    """

    classes: tuple[ServerClass, ...]
    rho: float

    def __post_init__(self):
        if not self.classes:
            raise ValueError("need at least one server class")
        if self.rho <= 0:
            raise ValueError("rho must be > 0")
        object.__setattr__(self, "classes", tuple(self.classes))

    @property
    def n(self) -> int:
        return sum(c.count for c in self.classes)

    @property
    def total_buffer(self) -> int:
        return sum(c.count * c.buffer for c in self.classes)

    def rho_j(self, j: int) -> float:
        return self.rho / self.classes[j].speed


def hetero_enumerate(hconfig: HeteroConfig, cap: int = HETERO_STATE_CAP) -> list[tuple[tuple[int, ...], ...]]:
    """All joint occupancy states, one tuple of per-class occupancy vectors each."""
    per_class = []
    count = 1
    for cls in hconfig.classes:
        states = enumerate_states(cls.count, cls.buffer, cap=cap)
        count *= len(states)
        if count > cap:
            raise StateSpaceTooLarge(
                f"heterogeneous enumeration exceeds the cap of {cap}")
        per_class.append([tuple(int(v) for v in row) for row in states])
    return [tuple(combo) for combo in product(*per_class)]


def _hetero_jobs(state) -> int:
    return sum(sum(k * v for k, v in enumerate(part)) for part in state)


def hetero_stationary_log_prob(hconfig: HeteroConfig, state) -> float:
    """Unnormalised log stationary weight of a joint occupancy state.

    Reduces exactly to stationary_log_prob when there is a single class of
    unit speed.
    """
    n = hconfig.n
    n_theta = hconfig.total_buffer
    sbar = _hetero_jobs(state)
    logw = gammaln(n_theta - sbar + 1)
    for j, (cls, part) in enumerate(zip(hconfig.classes, state)):
        if len(part) != cls.buffer + 1 or sum(part) != cls.count:
            raise ValueError(f"state part {part!r} does not match class {cls!r}")
        log_nrho_j = math.log(n * hconfig.rho_j(j))
        logw += gammaln(cls.count + 1)
        for k, s_kj in enumerate(part):
            logw -= gammaln(s_kj + 1)
            logw += s_kj * (gammaln(cls.buffer + 1) - gammaln(cls.buffer - k + 1)
                            + k * log_nrho_j)
    return float(logw)


def hetero_routing_rates(hconfig: HeteroConfig, state) -> dict[tuple[int, int], float]:
    """Arrival rate into class-j servers holding i jobs, keyed by (j, i)."""
    free = hconfig.total_buffer - _hetero_jobs(state)
    rates: dict[tuple[int, int], float] = {}
    if free == 0:
        return rates
    lam = hconfig.n * hconfig.rho
    for j, (cls, part) in enumerate(zip(hconfig.classes, state)):
        for i in range(cls.buffer):
            if part[i] > 0:
                rates[(j, i)] = lam * (cls.buffer - i) * part[i] / free
    return rates


def hetero_stationary_table(hconfig: HeteroConfig, cap: int = HETERO_STATE_CAP):
    """Normalised stationary probabilities as a dict state -> probability."""
    states = hetero_enumerate(hconfig, cap=cap)
    logw = np.array([hetero_stationary_log_prob(hconfig, s) for s in states])
    logw -= logsumexp(logw)
    return dict(zip(states, np.exp(logw)))


def hetero_generator(hconfig: HeteroConfig, cap: int = HETERO_STATE_CAP):
    """(states, Q) for the multi-speed chain; departures run at class speed."""
    states = hetero_enumerate(hconfig, cap=cap)
    index = {s: i for i, s in enumerate(states)}
    k = len(states)
    q = np.zeros((k, k))
    for i, s in enumerate(states):
        for (j, lvl), rate in hetero_routing_rates(hconfig, s).items():
            t = [list(part) for part in s]
            t[j][lvl] -= 1
            t[j][lvl + 1] += 1
            q[i, index[tuple(tuple(p) for p in t)]] += rate
        for j, (cls, part) in enumerate(zip(hconfig.classes, s)):
            for lvl in range(1, cls.buffer + 1):
                if part[lvl] > 0:
                    t = [list(p) for p in s]
                    t[j][lvl] -= 1
                    t[j][lvl - 1] += 1
                    q[i, index[tuple(tuple(p) for p in t)]] += cls.speed * part[lvl]
    np.fill_diagonal(q, q.diagonal() - q.sum(axis=1))
    return states, q


def hetero_stationary_from_generator(hconfig: HeteroConfig, cap: int = HETERO_STATE_CAP):
    """(states, pi) solving pi Q = 0 with normalisation; linear-solve oracle."""
    states, q = hetero_generator(hconfig, cap=cap)
    k = len(states)
    a = q.T.copy()
    a[k - 1, :] = 1.0
    b = np.zeros(k)
    b[k - 1] = 1.0
    pi = np.linalg.solve(a, b)
    return states, pi / pi.sum()
