"""Soft-margin RBF support vector machine trained with SMO on the dual."""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .errors import ConfigError, ContractError, ConvergenceError, DegenerateLabelsError

SV_THRESHOLD = 1e-8


@dataclass(frozen=True)
class KernelSpec:
    sigma: float = 1.0
    kind: str = "rbf"

    def __post_init__(self):
        if self.kind != "rbf":
            raise ConfigError(f"unsupported kernel {self.kind!r}")
        if not self.sigma > 0:
            raise ConfigError(f"sigma must be positive, got {self.sigma}")


@dataclass(frozen=True)
class SvmModel:
    alphas: np.ndarray
    support_vectors: np.ndarray
    support_labels: np.ndarray
    b: float
    C: float
    kernel: KernelSpec
    sweeps: int = 0


def rbf_kernel(x, x2, sigma: float) -> float:
    x = np.asarray(x, dtype=float)
    x2 = np.asarray(x2, dtype=float)
    if x.shape != x2.shape:
        raise ContractError(f"dimension mismatch {x.shape} vs {x2.shape}")
    if not sigma > 0:
        raise ConfigError("sigma must be positive")
    diff = x - x2
    return float(np.exp(-float(diff @ diff) / (2.0 * sigma * sigma)))


def rbf_gram(A, B, sigma: float) -> np.ndarray:
    A = np.atleast_2d(np.asarray(A, dtype=float))
    B = np.atleast_2d(np.asarray(B, dtype=float))
    if A.shape[1] != B.shape[1]:
        raise ContractError(f"dimension mismatch {A.shape[1]} vs {B.shape[1]}")
    sq = (np.sum(A * A, axis=1)[:, None] + np.sum(B * B, axis=1)[None, :] - 2.0 * A @ B.T)
    return np.exp(-np.maximum(sq, 0.0) / (2.0 * sigma * sigma))


def median_distance(X) -> float:
    """Median pairwise Euclidean distance, a default kernel width."""
    X = np.asarray(X, dtype=float)
    sq = np.sum(X * X, axis=1)
    D = np.sqrt(np.maximum(sq[:, None] + sq[None, :] - 2.0 * X @ X.T, 0.0))
    iu = np.triu_indices(X.shape[0], 1)
    med = float(np.median(D[iu])) if iu[0].size else 1.0
    return med if med > 0 else 1.0


def dual_objective(alpha, y, K) -> float:
    ay = np.asarray(alpha) * np.asarray(y)
    return float(np.sum(alpha) - 0.5 * ay @ K @ ay)


def _threshold(alpha, y, K, C) -> float:
    """Mean of ``y_i - g_i`` over unbounded multipliers; with none, the
    midpoint of the interval the KKT conditions leave for b."""
    g = K @ (alpha * y)
    free = (alpha > SV_THRESHOLD) & (alpha < C - SV_THRESHOLD)
    if np.any(free):
        return float(np.mean(y[free] - g[free]))
    lo, hi = -np.inf, np.inf
    for a, yi, gi in zip(alpha, y, g):
        at_upper = a >= C - SV_THRESHOLD
        if (yi > 0) != at_upper:  # b >= y - g
            lo = max(lo, yi - gi)
        else:
            hi = min(hi, yi - gi)
    if np.isfinite(lo) and np.isfinite(hi):
        return 0.5 * (lo + hi)
    return float(lo if np.isfinite(lo) else hi)


def fit_smo(X, y, C: float = 1.0, kernel: KernelSpec | None = None, tol: float = 1e-3,
            max_passes: int = 3, max_sweeps: int = 10000) -> SvmModel:
    """Train on labels in {-1, +1}. ``kernel`` defaults to an RBF whose
    width is the median pairwise training distance."""
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    if C <= 0:
        raise ConfigError(f"C must be positive, got {C}")
    if not np.all(np.isin(y, (-1.0, 1.0))):
        raise ContractError("labels must be -1 or +1")
    if np.unique(y).size < 2:
        raise DegenerateLabelsError("y contains a single class")
    if kernel is None:
        kernel = KernelSpec(median_distance(X))
    K = rbf_gram(X, X, kernel.sigma)
    alpha, _, sweeps, status = _kernels.smo_solve(K, y, float(C), tol, max_passes, max_sweeps)
    alpha = np.asarray(alpha)
    model = _assemble(X, y, K, alpha, C, kernel, sweeps)
    if status != _kernels.CONVERGED:
        why = "stalled" if status == _kernels.STALLED else "hit the sweep cap"
        raise ConvergenceError(f"SMO {why} after {sweeps} sweeps", best=model, iteration=sweeps)
    return model


def _assemble(X, y, K, alpha, C, kernel, sweeps):
    b = _threshold(alpha, y, K, C)
    sv = alpha > SV_THRESHOLD
    return SvmModel(alpha[sv].copy(), X[sv].copy(), y[sv].copy(), b, float(C), kernel, sweeps)


def decision_value(model: SvmModel, x):
    """``sum_i alpha_i y_i K(x, x_i) + b`` for one vector or a row matrix."""
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    Kx = rbf_gram(np.atleast_2d(x), model.support_vectors, model.kernel.sigma)
    f = Kx @ (model.alphas * model.support_labels) + model.b
    return float(f[0]) if single else f


def predict(model: SvmModel, x):
    """+1 where the decision value is >= 0, else -1."""
    f = decision_value(model, x)
    if np.ndim(f) == 0:
        return 1 if f >= 0 else -1
    return np.where(f >= 0, 1, -1)


def save_svm(model: SvmModel, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["b", repr(model.b), "C", repr(model.C), "sigma", repr(model.kernel.sigma)])
        p = model.support_vectors.shape[1]
        w.writerow(["alpha", "y"] + [f"x{i}" for i in range(p)])
        for a, yl, sv in zip(model.alphas, model.support_labels, model.support_vectors):
            w.writerow([repr(float(a)), int(yl)] + [repr(float(v)) for v in sv])


def load_svm(path) -> SvmModel:
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    head = rows[0]
    b, C, sigma = float(head[1]), float(head[3]), float(head[5])
    body = rows[2:]
    alphas = np.array([float(r[0]) for r in body])
    labels = np.array([float(r[1]) for r in body])
    svs = np.array([[float(v) for v in r[2:]] for r in body])
    return SvmModel(alphas, svs, labels, b, C, KernelSpec(sigma))
