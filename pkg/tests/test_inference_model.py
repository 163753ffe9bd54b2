"""Normalização, transições e invariâncias do estimador de campos."""

import numpy as np
import pytest
import torch

from core.exceptions import OdeInfConfigError, OdeInfValidationError
from odeinf.corruption import CorruptedTrajectory
from odeinf.demo_systems import damped_oscillator
from odeinf.inference_model import (ModelConfig, VectorFieldEstimator, build_model, collate_transitions,
                                    context_to_batch, count_parameters_by_role, extract_transitions,
                                    fit_normalization, fit_normalization_torch, model_config_for)
from odeinf.simulation import solve_reference

TIMES = 0.25 * np.arange(40)


def _context(times=TIMES, transform=lambda x: x):
    system = damped_oscillator()
    ics = [(2.0, 0.0), (0.0, 1.5), (-1.0, -1.0)]
    return [CorruptedTrajectory.from_observations(times, transform(solve_reference(system.field, np.array(ic),
                                                                                  TIMES)))
            for ic in ics]


def _queries(rng, n=32):
    return rng.uniform(-2.0, 2.0, size=(n, 2))


def _rel(a, b):
    return float(np.max(np.abs(a - b)) / max(np.max(np.abs(b)), 1e-30))


@pytest.fixture(scope="module")
def desk_model():
    model = build_model(model_config_for("desk"), seed=3, dtype=torch.float64)
    model.eval()
    return model


@pytest.mark.parametrize("gap,gamma", [(0.01, 1.0), (0.05, 0.2)])
def test_time_scale_from_uniform_gaps(gap, gamma):
    times = gap * np.arange(101)
    traj = CorruptedTrajectory.from_observations(times, np.sin(times))
    norm = fit_normalization([traj])
    assert norm.gamma == pytest.approx(gamma, abs=1e-12)


def test_state_normalization_round_trip(rng):
    norm = fit_normalization(_context())
    x = rng.normal(size=(100, 2)) * 5.0
    np.testing.assert_allclose(norm.denormalize_states(norm.normalize_states(x)), x, rtol=0, atol=1e-9)
    f = rng.normal(size=(10, 2))
    np.testing.assert_allclose(norm.denormalize_field(norm.normalize_field(f)), f, rtol=1e-12)


def test_normalization_ignores_last_observation_of_each_trajectory():
    traj = CorruptedTrajectory.from_observations(np.array([0.0, 1.0, 2.0]), np.array([1.0, 1.0, 50.0]))
    norm = fit_normalization([traj])
    assert norm.mu[0] == 1.0
    assert norm.sigma[0] == pytest.approx(1e-6)
    assert norm.floored == (True,)


def test_torch_normalization_matches_numpy():
    ctx = _context()
    norm = fit_normalization(ctx)
    tnorm = fit_normalization_torch(context_to_batch(ctx, dtype=torch.float64))
    np.testing.assert_allclose(tnorm.mu[0, :2].numpy(), norm.mu, rtol=1e-12)
    np.testing.assert_allclose(tnorm.sigma[0, :2].numpy(), norm.sigma, rtol=1e-12)
    assert float(tnorm.gamma[0]) == pytest.approx(norm.gamma, rel=1e-12)
    # dimensão de padding: identidade
    assert float(tnorm.mu[0, 2]) == 0.0 and float(tnorm.sigma[0, 2]) == 1.0


def test_transition_count_and_features():
    ctx = _context()
    tr = extract_transitions(ctx)
    assert len(tr) == sum(len(t) - 1 for t in ctx)
    np.testing.assert_array_equal(tr.squared, tr.increments ** 2)
    np.testing.assert_allclose(tr.gaps, 0.25)


def test_collate_rejects_dimension_above_d_max():
    traj = CorruptedTrajectory.from_observations(np.array([0.0, 1.0]), np.zeros((2, 4)))
    with pytest.raises(OdeInfValidationError):
        collate_transitions([extract_transitions([traj])], d_max=3)


def test_context_with_mixed_dimensions_is_rejected():
    a = CorruptedTrajectory.from_observations(np.array([0.0, 1.0]), np.zeros((2, 1)))
    b = CorruptedTrajectory.from_observations(np.array([0.0, 1.0]), np.zeros((2, 2)))
    with pytest.raises(OdeInfValidationError):
        fit_normalization([a, b])


def test_permutation_of_transitions(desk_model, rng):
    ctx = context_to_batch(_context(), dtype=torch.float64)
    perm = torch.as_tensor(rng.permutation(ctx.states.shape[1]))
    shuffled = type(ctx)(ctx.states[:, perm], ctx.increments[:, perm], ctx.gaps[:, perm], ctx.mask[:, perm],
                         ctx.dim_mask)
    q = torch.zeros((1, 32, 3), dtype=torch.float64)
    q[0, :, :2] = torch.as_tensor(_queries(rng))
    with torch.no_grad():
        a = desk_model.predict_field(ctx, q).numpy()
        b = desk_model.predict_field(shuffled, q).numpy()
    assert _rel(b, a) < 1e-5


def test_time_shift_is_bit_exact(desk_model, rng):
    q = _queries(rng)
    base = VectorFieldEstimator(desk_model, _context())(q)
    shifted = VectorFieldEstimator(desk_model, _context(times=TIMES + 8.0))(q)
    np.testing.assert_array_equal(base, shifted)


def test_time_dilation_scales_field(desk_model, rng):
    q = _queries(rng)
    base = VectorFieldEstimator(desk_model, _context())(q)
    slow = VectorFieldEstimator(desk_model, _context(times=2.0 * TIMES))(q)
    assert _rel(slow, base / 2.0) < 1e-4


def test_affine_equivariance_per_dimension(desk_model, rng):
    a = np.array([2.0, 0.5])
    b = np.array([1.0, -3.0])
    q = _queries(rng)
    base = VectorFieldEstimator(desk_model, _context())(q)
    moved = VectorFieldEstimator(desk_model, _context(transform=lambda x: a * x + b))(a * q + b)
    assert _rel(moved, a * base) < 1e-4


def test_padded_coordinates_do_not_leak(desk_model, rng):
    ctx = context_to_batch(_context(), dtype=torch.float64)
    q = torch.zeros((1, 16, 3), dtype=torch.float64)
    q[0, :, :2] = torch.as_tensor(_queries(rng, 16))
    noisy_ctx = type(ctx)(ctx.states.clone(), ctx.increments.clone(), ctx.gaps, ctx.mask, ctx.dim_mask)
    noisy_ctx.states[:, :, 2] = torch.as_tensor(rng.normal(size=ctx.states.shape[1]))
    noisy_ctx.increments[:, :, 2] = torch.as_tensor(rng.normal(size=ctx.states.shape[1]))
    noisy_q = q.clone()
    noisy_q[0, :, 2] = torch.as_tensor(rng.normal(size=16))
    with torch.no_grad():
        f1, u1, _ = desk_model(ctx, q)
        f2, u2, _ = desk_model(noisy_ctx, noisy_q)
    assert float((f1 - f2).abs().max()) < 1e-6
    assert float((u1 - u2).abs().max()) < 1e-6
    assert float(f1[..., 2].abs().max()) == 0.0


def test_estimator_shapes_and_log_variance(tiny_model):
    est = VectorFieldEstimator(tiny_model, _context())
    x = np.zeros((4, 5, 2))
    assert est(x).shape == (4, 5, 2)
    assert est.log_variance(x).shape == (4, 5)
    assert est.normalization.mu.shape == (2,)
    with pytest.raises(OdeInfValidationError):
        est(np.zeros((3, 1)))


def test_build_model_is_deterministic():
    a = build_model(model_config_for("tiny"), seed=9)
    b = build_model(model_config_for("tiny"), seed=9)
    for (na, pa), (nb, pb) in zip(a.named_parameters(), b.named_parameters()):
        assert na == nb
        assert torch.equal(pa, pb)


def test_parameter_roles_cover_every_parameter(tiny_model):
    roles = count_parameters_by_role(tiny_model)
    assert sum(roles.values()) == tiny_model.parameter_count()
    assert all(v > 0 for v in roles.values())


@pytest.mark.parametrize("preset,overrides", [("huge", {}), ("tiny", {"embed_dim": 18}),
                                              ("tiny", {"dropout": 1.0})])
def test_invalid_model_config(preset, overrides):
    with pytest.raises(OdeInfConfigError):
        model_config_for(preset, **overrides)


def test_model_config_manifest_round_trip():
    cfg = model_config_for("paper")
    assert ModelConfig.from_manifest(cfg.to_manifest()) == cfg


def test_paper_preset_is_full_scale():
    cfg = model_config_for("paper")
    assert (cfg.embed_dim, cfg.decoder_blocks, cfg.heads) == (256, 8, 8)
