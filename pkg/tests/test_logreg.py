import math
import warnings

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from roadfriction import logreg as lr
from roadfriction.errors import ContractError, DegenerateLabelsError, InsufficientDataError


def _model(beta):
    return lr.LogRegModel(np.asarray(beta, dtype=float), True, 0, math.nan)


def _data(n, beta, seed):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(n, len(beta) - 1))
    p = lr.sigmoid(beta[0] + X @ np.asarray(beta[1:]))
    return X, (rng.random(n) < p).astype(int)


def test_predict_proba_examples():
    assert lr.predict_proba(_model([0, 0]), [5.0]) == 0.5
    assert lr.predict_proba(_model([math.log(3), 1]), [0.0]) == pytest.approx(0.75)
    with pytest.raises(ContractError):
        lr.predict_proba(_model([0, 0]), [1.0, 2.0])


@given(st.floats(-700, 700))
def test_sigmoid_is_stable_and_invertible(t):
    p = float(lr.sigmoid(np.array(t)))
    assert 0.0 <= p <= 1.0 and math.isfinite(p)
    if abs(t) <= 10:  # beyond this 1 - p loses the digits a 1e-10 inverse needs
        assert float(lr.logit(p)) == pytest.approx(t, abs=1e-10)
        assert math.log(lr.odds(p)) == pytest.approx(t, abs=1e-10)


def test_odds():
    assert lr.odds(0.5) == 1.0
    assert lr.odds(0.8) == pytest.approx(4.0)
    assert lr.odds(1.0) == math.inf and lr.odds(0.0) == 0.0


def test_recovers_known_coefficients():
    beta = np.array([-0.5, 1.0, -2.0, 0.5])
    X, y = _data(5000, beta, 0)
    model = lr.fit_irls(X, y, ridge=0.0)
    assert model.converged
    assert np.max(np.abs(model.beta - beta)) < 0.15
    Xa = np.hstack([np.ones((len(y), 1)), X])
    assert np.max(np.abs(Xa.T @ (y - lr.predict_proba(model, X)))) < 1e-6


def test_no_signal_gives_zero_coefficients():
    rng = np.random.default_rng(1)
    X = rng.normal(size=(20000, 3))
    y = np.tile([0, 1], 10000)
    rng.shuffle(y)
    assert np.max(np.abs(lr.fit_irls(X, y).beta)) < 0.05


def test_deviance_trace_non_increasing():
    X, y = _data(500, np.array([0.3, 2.0, -1.0]), 2)
    trace = np.array(lr.fit_irls(X, y).deviance_trace)
    assert np.all(np.diff(trace) <= 1e-9)


def test_affine_rescaling_leaves_probabilities_unchanged():
    X, y = _data(800, np.array([0.2, 1.0, -1.5]), 3)
    c, s = np.array([3.0, -2.0]), np.array([10.0, 0.1])
    p1 = lr.predict_proba(lr.fit_irls(X, y, ridge=0.0), X)
    p2 = lr.predict_proba(lr.fit_irls((X - c) / s, y, ridge=0.0), (X - c) / s)
    assert np.max(np.abs(p1 - p2)) < 1e-8


def test_errors():
    X = np.random.default_rng(0).normal(size=(10, 2))
    with pytest.raises(DegenerateLabelsError):
        lr.fit_irls(X, np.ones(10))
    with pytest.raises(InsufficientDataError):
        lr.fit_irls(X[:2], [0, 1])


def test_separable_data_warns_and_stays_finite():
    X = np.array([[-2.0], [-1.0], [1.0], [2.0]])
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        model = lr.fit_irls(X, [0, 0, 1, 1], max_iter=30)
    assert np.all(np.isfinite(model.beta))
    assert caught or model.converged
    assert lr.predict(model, X).tolist() == [0, 0, 1, 1]


def test_round_trip(tmp_path):
    X, y = _data(200, np.array([0.1, 1.0]), 4)
    model = lr.fit_irls(X, y)
    path = tmp_path / "lr.csv"
    lr.save_logreg(model, path, ["humidity"])
    assert path.read_text().splitlines()[0] == "intercept,humidity"
    assert np.array_equal(lr.load_logreg(path).beta, model.beta)
