"""Prior de campos polinomiais: combinatória, avaliação e amostragem."""

from math import comb

import numpy as np
import pytest

from core.exceptions import OdeInfConfigError, OdeInfValidationError
from odeinf.ode_prior import (PolynomialVectorField, PriorConfig, enumerate_monomials, evaluate_field,
                              sample_vector_field)


@pytest.mark.parametrize("d", [1, 2, 3])
@pytest.mark.parametrize("p", range(7))
def test_monomial_count_is_binomial(d, p):
    """O número de monómios de grau <= p em d variáveis é binomial(d + p, p)."""
    monomials = enumerate_monomials(d, p)
    assert len(monomials) == comb(d + p, p)
    assert len(set(monomials)) == len(monomials)
    assert all(sum(m) <= p and len(m) == d for m in monomials)


def test_monomial_order_is_graded_lexicographic():
    assert enumerate_monomials(2, 2) == [(0, 0), (1, 0), (0, 1), (2, 0), (1, 1), (0, 2)]


def test_every_sampled_component_is_non_empty():
    """10^4 campos 3D: nenhuma componente fica sem termos."""
    rng = np.random.default_rng(123)
    config = PriorConfig(dimension=3, max_degree=3)
    for _ in range(10_000):
        vf = sample_vector_field(config, rng)
        assert all(len(c.terms) >= 1 for c in vf.components)
        lo, hi = config.scale_range
        assert lo <= vf.scale <= hi


def test_sampling_is_deterministic_given_seed():
    config = PriorConfig(dimension=2)
    a = sample_vector_field(config, np.random.default_rng(5))
    b = sample_vector_field(config, np.random.default_rng(5))
    assert a.to_manifest() == b.to_manifest()


def test_evaluate_field_matches_hand_computation():
    # dx1 = 2 * (1 - 3 x1 x2) ; dx2 = 2 * (x1^2)
    vf = PolynomialVectorField.from_coefficients([{(0, 0): 1.0, (1, 1): -3.0}, {(2, 0): 1.0}], scale=2.0)
    x = np.array([[1.0, 2.0], [-0.5, 0.0]])
    expected = 2.0 * np.array([[1.0 - 6.0, 1.0], [1.0, 0.25]])
    np.testing.assert_allclose(evaluate_field(vf, x), expected, rtol=0, atol=1e-14)
    np.testing.assert_allclose(vf(x[0]), expected[0], rtol=0, atol=1e-14)


def test_evaluate_field_keeps_leading_shape():
    vf = PolynomialVectorField.from_coefficients([{(1,): -1.0}])
    x = np.linspace(-1, 1, 24).reshape(2, 3, 4, 1)
    out = evaluate_field(vf, x)
    assert out.shape == x.shape
    np.testing.assert_array_equal(out, -x)


def test_evaluate_field_rejects_wrong_dimension():
    vf = PolynomialVectorField.from_coefficients([{(1,): -1.0}])
    with pytest.raises(OdeInfValidationError):
        evaluate_field(vf, np.zeros((3, 2)))


def test_manifest_round_trip_preserves_field():
    vf = sample_vector_field(PriorConfig(dimension=3), np.random.default_rng(0))
    back = PolynomialVectorField.from_manifest(vf.to_manifest())
    x = np.random.default_rng(1).normal(size=(10, 3))
    np.testing.assert_array_equal(evaluate_field(vf, x), evaluate_field(back, x))
    assert "dx3/dt" in vf.describe()


@pytest.mark.parametrize("kwargs", [
    {"dimension": 0},
    {"max_degree": 0},
    {"degree_keep_prob": 0.0},
    {"monomial_keep_prob": 1.5},
    {"scale_range": (1.0, 0.5)},
    {"coef_std": -1.0},
])
def test_invalid_prior_config_is_rejected(kwargs):
    with pytest.raises(OdeInfConfigError):
        PriorConfig(**kwargs).validate()
