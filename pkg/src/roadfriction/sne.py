"""Stochastic neighbour embedding with a Gaussian low-dimensional kernel."""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .errors import ConfigError, InsufficientDataError, NonFiniteError

log = logging.getLogger(__name__)


def default_momentum(n: int) -> float:
    return 0.5 if n < 250 else 0.8


@dataclass(frozen=True)
class SneConfig:
    out_dims: int = 2
    perplexity: float = 30.0
    n_iter: int = 500
    eta: float = 0.1
    alpha: object = default_momentum  # float or callable(iteration) -> float
    seed: int = 0
    sigma_tol: float = 1e-5

    def __post_init__(self):
        if self.out_dims < 1:
            raise ConfigError("out_dims must be >= 1")
        if self.perplexity <= 1.0:
            raise ConfigError("perplexity must exceed 1")
        if self.eta <= 0:
            raise ConfigError("eta must be positive")
        if self.n_iter < 0:
            raise ConfigError("n_iter must be >= 0")

    def momentum(self, n: int) -> float:
        a = self.alpha(n) if callable(self.alpha) else float(self.alpha)
        if not 0.0 <= a < 1.0:
            raise ConfigError(f"momentum {a} outside [0, 1)")
        return a


@dataclass
class SneState:
    P: np.ndarray
    Y: np.ndarray
    Y_prev: np.ndarray
    cost_history: list = field(default_factory=list)
    sigmas: np.ndarray | None = None


def squared_distances(X) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    sq = np.sum(X * X, axis=1)
    D = sq[:, None] + sq[None, :] - 2.0 * X @ X.T
    np.fill_diagonal(D, 0.0)
    return np.maximum(D, 0.0)


def _dedupe(X, seed):
    X = np.asarray(X, dtype=float)
    _, first = np.unique(X, axis=0, return_index=True)
    if first.size == X.shape[0]:
        return X
    rng = np.random.default_rng(seed)
    return X + 1e-8 * rng.standard_normal(X.shape)


def conditional_p(X, perplexity: float = 30.0, sigma_tol: float = 1e-5, seed: int = 0):
    """Row-stochastic ``P[i, j] = p_{j|i}`` with perplexity-calibrated
    Gaussian widths. Returns ``(P, sigmas)``."""
    X = np.asarray(X, dtype=float)
    n = X.shape[0]
    if n < 2:
        raise InsufficientDataError("need at least 2 points")
    if n == 2:
        return np.array([[0.0, 1.0], [1.0, 0.0]]), np.full(2, math.nan)
    if perplexity >= n:
        raise ConfigError(f"perplexity {perplexity} must be below the number of points {n}")
    D = squared_distances(_dedupe(X, seed))
    P, beta, failed = _kernels.perplexity_search(D, perplexity, sigma_tol, 100)
    for i in failed:
        log.warning("perplexity search did not converge for point %d; using bracket midpoint", i)
    return P, np.sqrt(1.0 / (2.0 * beta))


def conditional_q(Y) -> np.ndarray:
    """``q_{j|i}`` under unit-precision Gaussians in the embedding."""
    Y = np.asarray(Y, dtype=float)
    n = Y.shape[0]
    if n < 2:
        raise InsufficientDataError("need at least 2 points")
    logits = -squared_distances(Y)
    np.fill_diagonal(logits, -np.inf)
    logits -= logits.max(axis=1, keepdims=True)
    E = np.exp(logits)
    return E / E.sum(axis=1, keepdims=True)


def kl_cost(P, Q) -> float:
    """Sum over rows of KL(P_i || Q_i); entries with p = 0 contribute 0.
    Returns ``inf`` when some q is 0 where p > 0."""
    P = np.asarray(P, dtype=float)
    Q = np.asarray(Q, dtype=float)
    if P.shape != Q.shape:
        raise ConfigError("P and Q shapes differ")
    pos = P > 0
    if np.any(Q[pos] <= 0):
        return math.inf
    return float(np.sum(P[pos] * np.log(P[pos] / Q[pos])))


def sne_gradient(P, Q, Y) -> np.ndarray:
    """dC/dy_i = 2 sum_j (p_{j|i} - q_{j|i} + p_{i|j} - q_{i|j}) (y_i - y_j)."""
    M = np.asarray(P) - np.asarray(Q)
    S = M + M.T
    Y = np.asarray(Y, dtype=float)
    return 2.0 * (S.sum(axis=1)[:, None] * Y - S @ Y)


def embed(X, config: SneConfig = SneConfig()) -> SneState:
    """Momentum gradient descent on the KL cost.

    The update steps against the gradient (descent); see README.
    """
    X = np.asarray(X, dtype=float)
    n = X.shape[0]
    perp = config.perplexity
    if n / 3.0 > 1.0:
        perp = min(perp, n / 3.0)
    P, sigmas = conditional_p(X, perp, config.sigma_tol, config.seed)
    rng = np.random.default_rng(config.seed)
    Y = 1e-4 * rng.standard_normal((n, config.out_dims))
    Y_prev = Y.copy()
    state = SneState(P, Y, Y_prev, [], sigmas)
    for it in range(config.n_iter):
        Q = conditional_q(Y)
        cost = kl_cost(P, Q)
        if not math.isfinite(cost):
            raise NonFiniteError(f"non-finite SNE cost at iteration {it}", iteration=it, last_finite=Y)
        state.cost_history.append(cost)
        grad = sne_gradient(P, Q, Y)
        Y_next = Y - config.eta * grad + config.momentum(it) * (Y - Y_prev)
        Y_prev, Y = Y, Y_next
    state.Y = Y
    state.Y_prev = Y_prev
    return state


def write_embedding_csv(Y, labels, path) -> None:
    Y = np.asarray(Y)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["point_id", "label"] + [f"y{k}" for k in range(Y.shape[1])])
        for i, (row, lab) in enumerate(zip(Y, labels)):
            w.writerow([i, lab] + [repr(float(v)) for v in row])
