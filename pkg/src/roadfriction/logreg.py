"""Binary logistic regression fitted by iteratively reweighted least squares."""

from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import ContractError, DegenerateLabelsError, InsufficientDataError


@dataclass(frozen=True)
class LogRegModel:
    beta: np.ndarray  # index 0 is the intercept
    converged: bool
    n_iter: int
    final_deviance: float
    ridge: float = 0.0
    deviance_trace: tuple = field(default=(), repr=False)


def sigmoid(t):
    t = np.asarray(t, dtype=float)
    out = np.empty_like(t)
    pos = t >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-t[pos]))
    e = np.exp(t[~pos])
    out[~pos] = e / (1.0 + e)
    return out


def logit(p):
    p = np.asarray(p, dtype=float)
    return np.log(p) - np.log1p(-p)


def linear_predictor(model: LogRegModel, x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != model.beta.shape[0] - 1:
        raise ContractError(f"expected {model.beta.shape[0] - 1} features, got {x.shape[-1]}")
    return model.beta[0] + x @ model.beta[1:]


def predict_proba(model: LogRegModel, x):
    """P(y = 1 | x). Scalar for one vector, array for a row matrix."""
    p = sigmoid(linear_predictor(model, x))
    return float(p) if p.ndim == 0 else p


def predict(model: LogRegModel, x, threshold: float = 0.5):
    return (np.asarray(predict_proba(model, x)) >= threshold).astype(int)


def odds(p: float) -> float:
    if p <= 0.0:
        return 0.0
    if p >= 1.0:
        return math.inf
    return p / (1.0 - p)


def deviance(eta: np.ndarray, y: np.ndarray) -> float:
    # -2 log-likelihood, with log(pi) = -log(1 + e^-eta)
    return float(2.0 * np.sum(y * np.logaddexp(0.0, -eta) + (1.0 - y) * np.logaddexp(0.0, eta)))


def fit_irls(X, y, max_iter: int = 100, tol: float = 1e-8, ridge: float = 1e-8) -> LogRegModel:
    """Newton-Raphson on the binomial log-likelihood with step halving.

    ``ridge`` is added to the Hessian diagonal only, so a converged fit
    still solves the unpenalized score equations.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    n, p = X.shape
    if n <= p:
        raise InsufficientDataError(f"need more samples than features ({n} <= {p})")
    if np.unique(y).size < 2:
        raise DegenerateLabelsError("y contains a single class")
    Xa = np.hstack([np.ones((n, 1)), X])
    beta = np.zeros(p + 1)
    eta = Xa @ beta
    dev = deviance(eta, y)
    trace = [dev]
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        pi = sigmoid(eta)
        w = pi * (1.0 - pi)
        score = Xa.T @ (y - pi)
        H = Xa.T @ (Xa * w[:, None]) + ridge * np.eye(p + 1)
        try:
            step = np.linalg.solve(H, score)
        except np.linalg.LinAlgError:
            step = np.linalg.lstsq(H, score, rcond=None)[0]
        if not np.all(np.isfinite(step)):
            warnings.warn("non-finite IRLS update (separation?); returning last finite beta")
            break
        s = 1.0
        for _ in range(21):
            cand = beta + s * step
            eta_c = Xa @ cand
            dev_c = deviance(eta_c, y)
            if dev_c <= dev or not np.isfinite(dev):
                break
            s *= 0.5
        else:
            # no descent along the Newton direction: at the optimum to precision
            converged = True
            break
        delta = np.max(np.abs(cand - beta))
        beta, eta, dev = cand, eta_c, dev_c
        trace.append(dev)
        if delta < tol:
            converged = True
            break
    if not converged:
        warnings.warn(f"IRLS did not converge in {max_iter} iterations (possible separation)")
    return LogRegModel(beta, converged, it, dev, ridge, tuple(trace))


def save_logreg(model: LogRegModel, path, feature_names=None) -> None:
    p = model.beta.shape[0] - 1
    names = list(feature_names) if feature_names is not None else [f"x{i}" for i in range(p)]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["intercept"] + names)
        w.writerow([repr(float(b)) for b in model.beta])


def load_logreg(path) -> LogRegModel:
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    beta = np.array([float(v) for v in rows[1]])
    return LogRegModel(beta, True, 0, math.nan)
