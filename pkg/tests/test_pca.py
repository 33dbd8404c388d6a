import numpy as np
import pytest

from dialact.errors import RankError
from dialact.pca import pca_fit, pca_project, pca_reconstruct
from dialact.rng import SeededRng


def test_collinear_data_single_component_explains_everything():
    x = np.linspace(-3, 3, 40)
    data = np.stack([x, 2 * x], axis=1)
    p = pca_fit(data, 1)
    assert p.explained_variance_ratio[0] == pytest.approx(1.0, abs=1e-9)
    # direction is (1, 2)/sqrt(5) up to sign
    direction = p.components[0]
    np.testing.assert_allclose(np.abs(direction), np.array([1.0, 2.0]) / np.sqrt(5), atol=1e-9)


def test_full_rank_reconstruction():
    rng = SeededRng(1)
    data = rng.uniform_matrix(30, 5, -2, 2)
    p = pca_fit(data, 5)
    recon = pca_reconstruct(p, pca_project(p, data))
    assert np.abs(recon - data).max() < 1e-8


def test_constant_dataset_raises_rank_error():
    with pytest.raises(RankError):
        pca_fit(np.ones((10, 3)), 1)


def test_k_too_large_raises_rank_error():
    rng = SeededRng(2)
    with pytest.raises(RankError):
        pca_fit(rng.uniform_matrix(4, 3, -1, 1), 4)
    with pytest.raises(RankError):
        pca_fit(rng.uniform_matrix(2, 8, -1, 1), 3)
    with pytest.raises(RankError):
        pca_fit(rng.uniform_matrix(1, 8, -1, 1), 1)


def test_components_orthonormal_and_variances_sorted():
    rng = SeededRng(3)
    for seed in range(5):
        data = SeededRng(seed).uniform_matrix(25, 6, -1, 1) * (1 + seed)
        p = pca_fit(data, 4)
        gram = p.components @ p.components.T
        np.testing.assert_allclose(gram, np.eye(4), atol=1e-8)
        assert all(a >= b - 1e-12 for a, b in zip(p.explained_variance, p.explained_variance[1:]))
        assert p.explained_variance_ratio.sum() <= 1.0 + 1e-9
    _ = rng


def test_project_single_vector_and_batch():
    data = np.array([[1.0, 0.0], [2.0, 0.1], [3.0, -0.1], [4.0, 0.0]])
    p = pca_fit(data, 1)
    single = pca_project(p, data[0])
    batch = pca_project(p, data)
    assert single.shape == (1,)
    assert batch.shape == (4, 1)
    assert single[0] == pytest.approx(batch[0, 0])


def test_projection_is_deterministic_sign_fixed():
    rng = SeededRng(4)
    data = rng.uniform_matrix(20, 4, -1, 1)
    a = pca_fit(data, 3)
    b = pca_fit(data.copy(), 3)
    np.testing.assert_array_equal(a.components, b.components)
    for i in range(3):
        j = int(np.argmax(np.abs(a.components[i])))
        assert a.components[i, j] > 0
