"""Mean-field fixed point, level distribution and ODE dynamics."""

import math

import numpy as np
import pytest

from psfarm import (SingularDriftError, SystemConfig, drift, fixed_point_mean,
                    fixed_point_residual, integrate, level_distribution,
                    mean_sojourn_meanfield, psi, stationary_level_distribution,
                    stationary_table)
from psfarm.meanfield import TrajectoryPoint

SQRT3 = math.sqrt(3.0)


def test_fixed_point_mean_values():
    assert fixed_point_mean(1, 0.5) == pytest.approx(0.5, abs=1e-12)
    assert fixed_point_mean(2, 0.5) == pytest.approx(2.0 - 0.5 * (1.0 + SQRT3), abs=1e-11)
    assert fixed_point_mean(3, 1.2) == 3.0


def test_fixed_point_mean_continuous_at_critical_load():
    assert fixed_point_mean(2, 1.0) == pytest.approx(2.0, abs=1e-9)


def test_psi_values():
    assert psi(4, 0.7, 4.0) == 1.0
    assert psi(1, 0.5, 0.5) == pytest.approx(2.0, rel=1e-15)
    assert psi(1, 0.5, 0.0) == pytest.approx(3.0, rel=1e-15)


def test_level_distribution_values():
    assert level_distribution(1, 0.7, 0.7).probs == pytest.approx([0.3, 0.7], abs=1e-12)
    assert level_distribution(2, 1.0, 2.0).probs == pytest.approx([0.0, 0.0, 1.0])
    assert level_distribution(1, 0.5, 0.0).probs == pytest.approx([2 / 3, 1 / 3], rel=1e-14)


def test_level_distribution_fixed_point_mean_property():
    for theta in range(1, 7):
        for rho in (0.1, 0.25, 0.5, 0.75, 0.9, 0.99):
            c_hat = fixed_point_mean(theta, rho)
            assert level_distribution(theta, rho, c_hat).mean == pytest.approx(c_hat, abs=1e-10)


def test_stationary_level_distribution_blocks_like_erlang():
    # the empty-server mass at the fixed point is exactly 1 - rho
    for theta in (1, 2, 5):
        for rho in (0.3, 0.8):
            p_hat = stationary_level_distribution(theta, rho)
            assert p_hat.probs[0] == pytest.approx(1.0 - rho, abs=1e-10)


def test_argmax_of_tilted_normaliser_is_fixed_point():
    # c + log(psi(c)) peaks at c_hat; checked on a 1e-4 grid
    for theta, rho in ((1, 0.5), (2, 0.8), (3, 0.6)):
        grid = np.arange(0.0, theta + 1e-9, 1e-4)
        vals = grid + np.log([psi(theta, rho, c) for c in grid])
        c_best = grid[int(np.argmax(vals))]
        assert c_best == pytest.approx(fixed_point_mean(theta, rho), abs=1e-3)


def test_mean_sojourn_values():
    assert mean_sojourn_meanfield(1, 0.5) == 0.0
    # closed form: the sum telescopes to (c_hat - rho)/rho^2
    assert mean_sojourn_meanfield(2, 0.5) == pytest.approx(4.0 - 2.0 * SQRT3, abs=1e-11)
    for theta in (1, 2, 3, 5):
        for rho in (0.2, 0.5, 0.9):
            c_hat = fixed_point_mean(theta, rho)
            assert mean_sojourn_meanfield(theta, rho) == pytest.approx(
                (c_hat - rho) / rho**2, abs=1e-10)


def test_mean_sojourn_rejects_overload():
    with pytest.raises(ValueError):
        mean_sojourn_meanfield(2, 1.0)


def test_drift_zero_at_fixed_point():
    assert drift(1, 0.7, [0.3, 0.7]) == pytest.approx([0.0, 0.0], abs=1e-14)


def test_drift_from_empty_state():
    assert drift(1, 0.5, [1.0, 0.0]) == pytest.approx([-0.5, 0.5])


def test_drift_mass_conservation():
    rng = np.random.default_rng(42)
    for theta in range(1, 6):
        for _ in range(25):
            y = rng.dirichlet(np.ones(theta + 1))
            if theta - y @ np.arange(theta + 1) <= 1e-9:
                continue
            assert abs(drift(theta, 0.8, y).sum()) <= 1e-12


def test_drift_boundary_rules():
    e_theta = [0.0, 0.0, 1.0]
    assert drift(2, 1.5, e_theta) == pytest.approx([0.0, 0.0, 0.0])
    assert drift(2, 1.0, e_theta) == pytest.approx([0.0, 0.0, 0.0])
    with pytest.raises(SingularDriftError):
        drift(2, 0.9, e_theta)


def test_integrate_converges_to_fixed_point():
    points = integrate(1, 0.7, [1.0, 0.0], 200.0, record_every=1000)
    assert points[-1].y.probs == pytest.approx([0.3, 0.7], abs=1e-6)
    points = integrate(2, 0.5, [1.0, 0.0, 0.0], 200.0, record_every=1000)
    assert points[-1].y.mean == pytest.approx(fixed_point_mean(2, 0.5), abs=1e-6)


def test_integrate_saturated_boundary_is_absorbing_in_overload():
    points = integrate(2, 1.2, [0.0, 0.0, 1.0], 5.0, record_every=100)
    for p in points:
        assert p.y.probs == pytest.approx([0.0, 0.0, 1.0])


def test_integrate_mass_conservation_along_trajectory():
    for pt in integrate(3, 0.9, [0.5, 0.5, 0.0, 0.0], 50.0, record_every=50):
        assert abs(pt.y.probs.sum() - 1.0) <= 1e-9
        assert isinstance(pt, TrajectoryPoint)


def test_integrate_distance_is_eventually_decreasing():
    rng = np.random.default_rng(7)
    for theta, rho in ((2, 0.5), (3, 0.9)):
        target = stationary_level_distribution(theta, rho).probs
        for _ in range(20):
            y0 = rng.dirichlet(np.ones(theta + 1))
            points = integrate(theta, rho, y0, 60.0, record_every=1000)  # t = 10, 20, ...
            dists = [np.max(np.abs(p.y.probs - target)) for p in points[1:]]
            assert all(d2 <= d1 + 1e-12 for d1, d2 in zip(dists, dists[1:]))


def test_integrate_rejects_bad_step():
    with pytest.raises(ValueError):
        integrate(1, 0.5, [1.0, 0.0], 1.0, step=0.0)


def test_fixed_point_residual_grid():
    assert fixed_point_residual(1, 0.5) <= 1e-12
    assert fixed_point_residual(3, 0.9) <= 1e-10
    assert fixed_point_residual(2, 1.5) == 0.0
    for theta in range(1, 7):
        for rho in (0.1, 0.4, 0.7, 0.95):
            assert fixed_point_residual(theta, rho) <= 1e-10


def test_finite_farm_marginal_approaches_fixed_point():
    # stationary mean occupancy fractions vs the limit law, n = 20..200
    theta, rho = 2, 0.8
    target = stationary_level_distribution(theta, rho).probs
    gaps = []
    for n in (20, 50, 100, 200):
        table = stationary_table(SystemConfig(n, theta, rho))
        marginal = table.probs() @ table.states / n
        gaps.append(float(np.max(np.abs(marginal - target))))
    assert all(g2 < g1 for g1, g2 in zip(gaps, gaps[1:]))
    assert gaps[-1] <= 2e-2
