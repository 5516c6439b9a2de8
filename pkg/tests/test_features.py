import numpy as np
import pytest

from src.errors import ContractError
from src.features import feature_names, latent_feature_matrix, latent_features
from src.vae import LatentCode


def _code(mu, sigma):
    return LatentCode(mu=np.asarray(mu, float), sigma=np.asarray(sigma, float))


def test_single_vae_vector_is_mu_then_sigma():
    vec = latent_features([_code([1, 2], [0.1, 0.2])], expected_dim=4)
    np.testing.assert_array_equal(vec, [1, 2, 0.1, 0.2])


def test_four_codes_concatenate_in_antenna_order():
    codes = [_code([a, a], [a / 10, a / 10]) for a in (1, 2, 3, 4)]
    vec = latent_features(codes, expected_dim=16)
    np.testing.assert_array_equal(vec[:4], [1, 1, 0.1, 0.1])
    np.testing.assert_array_equal(vec[12:], [4, 4, 0.4, 0.4])


def test_wrong_dimension_and_empty_input():
    with pytest.raises(ContractError):
        latent_features([_code([1, 2], [1, 1])], expected_dim=16)
    with pytest.raises(ContractError):
        latent_features([])


def test_matrix_form_agrees_with_vector_form():
    rng = np.random.default_rng(0)
    moments = [(rng.normal(size=(3, 2)), rng.uniform(0.1, 1, size=(3, 2))) for _ in range(4)]
    matrix = latent_feature_matrix(moments)
    assert matrix.shape == (3, 16)
    for i in range(3):
        row = latent_features([_code(mu[i], sigma[i]) for mu, sigma in moments])
        np.testing.assert_array_equal(matrix[i], row)
    with pytest.raises(ContractError):
        latent_feature_matrix([(np.zeros((3, 2)), np.ones((2, 2)))])


def test_feature_names():
    assert feature_names([2], [0]) == ["μ₀¹", "μ₁¹", "σ₀¹", "σ₁¹"]
    assert feature_names([3], [None]) == ["μ₀", "μ₁", "μ₂", "σ₀", "σ₁", "σ₂"]
    names = feature_names([2] * 4, [0, 1, 2, 3])
    assert len(names) == 16 and names[4] == "μ₀²" and names[-1] == "σ₁⁴"
    with pytest.raises(ContractError):
        feature_names([2, 2], [0])
