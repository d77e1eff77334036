import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from roadfriction import pca
from roadfriction.errors import ConfigError, ContractError, InsufficientDataError


def test_covariance_examples():
    assert pca.covariance([[1, 1], [-1, -1]]).tolist() == [[1, 1], [1, 1]]
    assert not pca.covariance([[2.0, 3.0]] * 4).any()
    C = pca.covariance(np.random.default_rng(0).normal(size=(30, 5)))
    assert np.array_equal(C, C.T)
    with pytest.raises(InsufficientDataError):
        pca.covariance([[1.0, 2.0]])


def test_eig_examples():
    vals, vecs = pca.eig_symmetric(np.array([[1.0, 1.0], [1.0, 1.0]]))
    assert vals == pytest.approx([2.0, 0.0], abs=1e-12)
    assert vecs[:, 0] == pytest.approx([2 ** -0.5, 2 ** -0.5])
    assert pca.eig_symmetric(np.eye(4))[0].tolist() == [1.0] * 4
    assert pca.eig_symmetric(np.diag([3.0, 1.0, 2.0]))[0].tolist() == [3.0, 2.0, 1.0]


def test_eig_rejects_asymmetric():
    with pytest.raises(ContractError):
        pca.eig_symmetric(np.array([[1.0, 2.0], [0.0, 1.0]]))


def test_eigenvector_sign_rule():
    _, vecs = pca.eig_symmetric(pca.covariance(np.random.default_rng(3).normal(size=(50, 6))))
    for k in range(vecs.shape[1]):
        assert vecs[np.argmax(np.abs(vecs[:, k])), k] > 0


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 9), st.integers(0, 2**16), st.floats(0.01, 100))
def test_eig_reconstruction_and_trace(n, seed, scale):
    A = np.random.default_rng(seed).normal(scale=scale, size=(n, n))
    C = A + A.T
    vals, K = pca.eig_symmetric(C)
    tol = 1e-8 * max(1.0, np.abs(C).max())
    assert np.max(np.abs(K @ np.diag(vals) @ K.T - C)) < tol
    assert np.max(np.abs(K.T @ K - np.eye(n))) < 1e-8
    assert abs(vals.sum() - np.trace(C)) < tol
    assert np.all(np.diff(vals) <= 0)


def test_total_variance():
    assert pca.total_variance([2.0, 0.0], 1) == (1.0, 1.0)
    assert pca.total_variance([3.0, 2.0, 1.0], 3)[1] == 1.0
    assert pca.total_variance([1.0] * 4, 3)[1] == pytest.approx(0.75)
    with pytest.raises(ConfigError):
        pca.total_variance([1.0, 1.0], 3)


def test_fit_pca_policies():
    rng = np.random.default_rng(1)
    t = rng.normal(size=100)
    rank1 = np.outer(t, [1.0, 2.0, -1.0])
    assert pca.fit_pca(rank1, variance_fraction=0.99).n_keep == 1
    assert pca.fit_pca(rng.normal(size=(40, 20))).n_keep == 14
    with pytest.raises(ConfigError):
        pca.fit_pca(rank1, variance_fraction=1.5)
    with pytest.raises(ConfigError):
        pca.fit_pca(rank1, variance_fraction=0.0)
    with pytest.raises(ConfigError):
        pca.fit_pca(rank1, n_keep=1, variance_fraction=0.5)


def test_full_basis_projection_is_an_isometry():
    X = np.random.default_rng(2).normal(size=(25, 4))
    model = pca.fit_pca(X, n_keep=4)
    Y = pca.project(model, X)
    dX = np.linalg.norm(X[:, None] - X[None], axis=-1)
    dY = np.linalg.norm(Y[:, None] - Y[None], axis=-1)
    assert np.max(np.abs(dX - dY)) < 1e-8


def test_projection_examples():
    X = np.random.default_rng(4).normal(size=(60, 5)) * [5, 3, 2, 1, 0.5]
    model = pca.fit_pca(X, n_keep=3)
    assert np.allclose(pca.project(model, model.mean), 0)
    e = pca.project(model, model.mean + model.eigenvectors[:, 0])
    assert e == pytest.approx([1.0, 0.0, 0.0], abs=1e-12)
    Y = pca.project(model, X)
    assert Y.var(axis=0) == pytest.approx(model.eigenvalues[:3], abs=1e-8)
    with pytest.raises(ContractError):
        pca.project(model, np.zeros(4))


def test_round_trip(tmp_path):
    model = pca.fit_pca(np.random.default_rng(5).normal(size=(30, 4)), n_keep=2)
    path = tmp_path / "pca.csv"
    pca.save_pca(model, path)
    back = pca.load_pca(path)
    assert back.n_keep == 2
    assert np.array_equal(back.eigenvectors, model.eigenvectors)
    assert np.array_equal(back.mean, model.mean)


def test_gram_matrices_are_psd():
    from roadfriction.svm import rbf_gram

    X = np.random.default_rng(6).normal(size=(30, 3))
    vals, _ = pca.eig_symmetric(rbf_gram(X, X, 1.0))
    assert vals.min() > -1e-8
