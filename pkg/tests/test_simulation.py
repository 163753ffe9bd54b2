"""Integração de Euler, filtragem de divergência, caixas e solução de referência."""

import time

import numpy as np
import pytest

from core.exceptions import OdeInfConfigError, OdeInfValidationError
from odeinf.ode_prior import PolynomialVectorField
from odeinf.simulation import (Divergence, Rejection, TimeGrid, TrajectorySet, bounding_box, euler_rollout,
                               integrate_euler, integrate_on_times, sample_vf_targets, simulate_system,
                               solve_reference)

DECAY = PolynomialVectorField.from_coefficients([{(1,): -1.0}])
BLOWUP = PolynomialVectorField.from_coefficients([{(2,): 1.0}])


def _decay_error(substeps: int) -> float:
    grid = TimeGrid(t_start=0.0, t_end=10.0, n_points=201, substeps=substeps)
    traj = integrate_euler(DECAY, np.array([1.0]), grid)
    return float(np.max(np.abs(traj.states[:, 0] - np.exp(-traj.times))))


def test_euler_on_linear_decay_matches_exponential():
    """Δt = 0.05 com 20 subpassos em [0, 10]: erro máximo <= 5e-3 contra e^(-t)."""
    started = time.perf_counter()
    err = _decay_error(20)
    assert err <= 5e-3
    assert time.perf_counter() - started < 1.0


def test_halving_substeps_doubles_error():
    ratio = _decay_error(10) / _decay_error(20)
    assert 1.7 <= ratio <= 2.3


def test_default_grid_spacing():
    grid = TimeGrid()
    assert grid.dt == pytest.approx(0.05)
    assert grid.substep == pytest.approx(0.0025)
    times = grid.times()
    assert times.shape == (200,)
    assert times[0] == 0.0
    assert times[-1] == pytest.approx(9.95)


@pytest.mark.parametrize("kwargs", [{"t_end": 0.0}, {"n_points": 1}, {"substeps": 0}])
def test_invalid_grid_is_rejected(kwargs):
    with pytest.raises(OdeInfConfigError):
        TimeGrid(**kwargs).validate()


def test_rollout_is_batched_over_initial_conditions():
    x0 = np.array([[1.0], [2.0], [-3.0]])
    states = euler_rollout(DECAY, x0, np.full(10, 0.1), substeps=4)
    assert states.shape == (3, 11, 1)
    np.testing.assert_allclose(states[1], 2.0 * states[0], rtol=1e-14)
    np.testing.assert_allclose(states[2], -3.0 * states[0], rtol=1e-14)


def test_blowup_is_reported_as_divergence():
    """dx/dt = x^2 com x(0) = 1 explode em t = 1."""
    grid = TimeGrid(t_end=2.0, n_points=41, substeps=20)
    out = integrate_euler(BLOWUP, np.array([1.0]), grid, bound=100.0)
    assert isinstance(out, Divergence)
    assert out.reason == "bound"
    assert out.trajectory == 0
    assert 0 < out.first_bad_index <= 40


def test_simulate_system_rejects_divergent_fields(rng):
    grid = TimeGrid(t_end=2.0, n_points=41, substeps=20)
    out = simulate_system(BLOWUP, 2, grid, reject_threshold=100.0, rng=rng,
                          initial_conditions=np.array([[0.1], [1.0]]))
    assert isinstance(out, Rejection)
    assert out.reason == "bound"
    assert out.divergence.trajectory == 1


def test_simulate_system_rejects_initial_conditions_outside_threshold(rng):
    out = simulate_system(DECAY, 1, TimeGrid(), reject_threshold=1.0, rng=rng,
                          initial_conditions=np.array([[5.0]]))
    assert isinstance(out, Rejection)
    assert out.reason == "initial_condition"


def test_simulate_system_returns_every_trajectory(rng):
    grid = TimeGrid(t_end=2.45, n_points=50, substeps=5)
    out = simulate_system(DECAY, 4, grid, reject_threshold=100.0, rng=rng)
    assert isinstance(out, TrajectorySet)
    assert out.states.shape == (4, 50, 1)
    assert len(list(out)) == 4
    np.testing.assert_array_equal(out.times, grid.times())


def test_bounding_box_expansion_and_degenerate_padding():
    points = np.array([[0.0, 1.0], [2.0, 1.0]])
    box = bounding_box(points, expand=0.5)
    np.testing.assert_allclose(box.low, [-1.0, 0.9])
    np.testing.assert_allclose(box.high, [3.0, 1.1])
    assert box.contains(points).all()
    assert not box.contains(np.array([3.5, 1.0]))


def test_bounding_box_rejects_empty_input():
    with pytest.raises(OdeInfValidationError):
        bounding_box([], expand=0.1)


def test_vf_targets_lie_in_box_and_match_field(rng):
    box = bounding_box(np.array([[-1.0], [2.0]]), expand=0.0)
    samples = sample_vf_targets(DECAY, box, 500, rng)
    assert len(samples) == 500
    assert box.contains(samples.locations).all()
    np.testing.assert_array_equal(samples.values, -samples.locations)


def test_integrate_on_times_requires_increasing_times():
    with pytest.raises(OdeInfValidationError):
        integrate_on_times(DECAY, np.array([1.0]), np.array([0.0, 0.5, 0.5]), substeps=2)


def test_integrate_on_times_with_irregular_gaps():
    times = np.array([0.0, 0.1, 0.5, 0.55, 2.0])
    states = integrate_on_times(DECAY, np.array([1.0]), times, substeps=200)
    np.testing.assert_allclose(states[0, :, 0], np.exp(-times), atol=2e-3)


def test_reference_solution_is_accurate():
    times = np.linspace(0.0, 5.0, 51)
    ref = solve_reference(DECAY, np.array([1.0]), times)
    np.testing.assert_allclose(ref[:, 0], np.exp(-times), rtol=1e-8)


def test_reference_solution_reports_blowup():
    times = np.linspace(0.0, 2.0, 21)
    out = solve_reference(BLOWUP, np.array([1.0]), times)
    assert isinstance(out, Divergence)
