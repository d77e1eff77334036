import math

import numpy as np
import pytest

from roadfriction import svm
from roadfriction.errors import ConfigError, ContractError, ConvergenceError, DegenerateLabelsError

from oracles import qp_dual_enumerate


def _margins(model, X, y):
    return y * svm.decision_value(model, X)


def test_rbf_kernel_examples():
    x = np.array([1.0, 2.0])
    assert svm.rbf_kernel(x, x, 0.7) == 1.0
    s = 1.3
    assert svm.rbf_kernel([0.0, 0.0], [s * math.sqrt(2), 0.0], s) == pytest.approx(math.exp(-1))
    a, b = np.array([0.1, -2.0]), np.array([1.5, 0.3])
    assert svm.rbf_kernel(a, b, 2.0) == svm.rbf_kernel(b, a, 2.0)
    with pytest.raises(ContractError):
        svm.rbf_kernel([0.0], [0.0, 1.0], 1.0)
    with pytest.raises(ConfigError):
        svm.KernelSpec(sigma=0.0)


def test_two_symmetric_points():
    X = np.array([[-1.0, 0.0], [1.0, 0.0]])
    y = np.array([-1.0, 1.0])
    model = svm.fit_smo(X, y, C=10.0, kernel=svm.KernelSpec(1.0))
    assert model.alphas[0] == pytest.approx(model.alphas[1], abs=1e-6)
    assert abs(svm.decision_value(model, np.zeros(2))) < 1e-6


def test_separable_blobs_have_zero_training_error():
    rng = np.random.default_rng(0)
    X = np.vstack([rng.normal(-3, 0.7, (10, 2)), rng.normal(3, 0.7, (10, 2))])
    y = np.repeat([-1.0, 1.0], 10)
    model = svm.fit_smo(X, y, C=10.0)
    assert np.array_equal(svm.predict(model, X), y)
    assert model.kernel.sigma == pytest.approx(svm.median_distance(X))


def test_fitted_models_satisfy_dual_constraints_and_kkt():
    rng = np.random.default_rng(1)
    tol = 1e-3
    for trial in range(15):
        n = int(rng.integers(10, 40))
        X = rng.normal(size=(n, 3))
        y = np.where(X[:, 0] + 0.5 * rng.normal(size=n) > 0, 1.0, -1.0)
        if np.unique(y).size < 2:
            continue
        C = float(rng.choice([0.1, 1.0, 10.0]))
        K = svm.rbf_gram(X, X, 1.0)
        alpha, _, _, status = svm._kernels.smo_solve(K, y, C, tol, 3, 10000)
        alpha = np.asarray(alpha)
        assert status == svm._kernels.CONVERGED
        assert np.all(alpha >= 0) and np.all(alpha <= C)
        assert abs(alpha @ y) < 1e-6
        b = svm._threshold(alpha, y, K, C)
        m = y * (K @ (alpha * y) + b)
        assert np.all(m[alpha <= 1e-8] >= 1 - tol)
        assert np.all(m[alpha >= C - 1e-8] <= 1 + tol)
        free = (alpha > 1e-8) & (alpha < C - 1e-8)
        assert np.all(np.abs(m[free] - 1) <= tol)


def test_matches_exact_qp_oracle():
    rng = np.random.default_rng(2)
    for _ in range(10):
        n = int(rng.integers(3, 8))
        X = rng.normal(size=(n, 2))
        y = rng.choice([-1.0, 1.0], size=n)
        y[0], y[1] = 1.0, -1.0
        C = float(rng.choice([0.5, 2.0, 20.0]))
        K = svm.rbf_gram(X, X, 1.0)
        model = svm.fit_smo(X, y, C=C, kernel=svm.KernelSpec(1.0), tol=1e-6)
        alpha = np.zeros(n)
        idx = [int(np.flatnonzero((X == sv).all(axis=1))[0]) for sv in model.support_vectors]
        alpha[idx] = model.alphas
        a_star = qp_dual_enumerate(K, y, C)
        assert svm.dual_objective(alpha, y, K) == pytest.approx(svm.dual_objective(a_star, y, K), abs=1e-4)


def test_free_support_vectors_sit_on_the_margin():
    rng = np.random.default_rng(3)
    X = rng.normal(size=(30, 2))
    y = np.where(X[:, 0] * X[:, 1] > 0, 1.0, -1.0)
    model = svm.fit_smo(X, y, C=5.0, kernel=svm.KernelSpec(1.0))
    free = model.alphas < model.C - 1e-8
    m = model.support_labels[free] * svm.decision_value(model, model.support_vectors[free])
    assert np.all(np.abs(m - 1) < 1e-3)
    assert model.support_vectors.shape[0] > 0


def test_tie_and_far_field_rules():
    model = svm.SvmModel(np.array([1.0]), np.array([[0.0]]), np.array([1.0]), -1.0, 1.0,
                         svm.KernelSpec(1.0))
    assert svm.decision_value(model, [0.0]) == 0.0
    assert svm.predict(model, [0.0]) == 1
    assert svm.predict(model, [1e3]) == -1  # kernel vanishes, sign(b)


def test_errors():
    X = np.zeros((4, 2))
    with pytest.raises(DegenerateLabelsError):
        svm.fit_smo(X, np.ones(4))
    with pytest.raises(ContractError):
        svm.fit_smo(X, [0, 1, 0, 1])
    with pytest.raises(ConfigError):
        svm.fit_smo(X, [-1, 1, -1, 1], C=0)


def test_sweep_cap_raises_with_best_iterate():
    rng = np.random.default_rng(4)
    X = rng.normal(size=(40, 2))
    y = np.where(rng.random(40) > 0.5, 1.0, -1.0)
    y[:2] = [1.0, -1.0]
    with pytest.raises(ConvergenceError) as exc:
        svm.fit_smo(X, y, C=100.0, kernel=svm.KernelSpec(0.3), max_sweeps=1)
    assert isinstance(exc.value.best, svm.SvmModel)


def test_round_trip(tmp_path):
    X = np.array([[-1.0, 0.0], [1.0, 0.0], [0.0, 2.0]])
    model = svm.fit_smo(X, [-1, 1, 1], C=1.0)
    path = tmp_path / "svm.csv"
    svm.save_svm(model, path)
    back = svm.load_svm(path)
    assert back.b == model.b and np.array_equal(back.alphas, model.alphas)
    assert np.array_equal(svm.predict(back, X), svm.predict(model, X))
