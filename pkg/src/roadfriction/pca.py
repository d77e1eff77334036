"""Principal component analysis on top of a cyclic Jacobi eigensolver."""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .errors import ConfigError, ContractError, InsufficientDataError

DEFAULT_N_KEEP = 14


@dataclass(frozen=True)
class PcaModel:
    mean: np.ndarray
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray
    n_keep: int

    @property
    def components(self) -> np.ndarray:
        return self.eigenvectors[:, : self.n_keep]


def covariance(data, centered: bool = False) -> np.ndarray:
    """Population covariance ``Xc'Xc / n``; symmetrized exactly."""
    X = np.asarray(data, dtype=float)
    if X.ndim != 2 or X.shape[0] < 2:
        raise InsufficientDataError("covariance needs an n x N matrix with n >= 2")
    Xc = X if centered else X - X.mean(axis=0)
    C = Xc.T @ Xc / X.shape[0]
    return 0.5 * (C + C.T)


def eig_symmetric(C, tol: float = 1e-12, max_sweeps: int = 100):
    """Eigenvalues (descending) and orthonormal eigenvectors (columns).

    Each eigenvector is signed so its largest-magnitude component is
    positive.
    """
    C = np.asarray(C, dtype=float)
    if C.ndim != 2 or C.shape[0] != C.shape[1]:
        raise ContractError("eig_symmetric needs a square matrix")
    if C.size and np.max(np.abs(C - C.T)) > 1e-10:
        raise ContractError("matrix is not symmetric")
    scale = max(1.0, float(np.max(np.abs(C)))) if C.size else 1.0
    vals, vecs, _ = _kernels.jacobi_eigh(C, tol * scale, max_sweeps)
    order = np.argsort(-vals, kind="stable")
    vals = vals[order]
    vecs = vecs[:, order]
    for k in range(vecs.shape[1]):
        i = int(np.argmax(np.abs(vecs[:, k])))
        if vecs[i, k] < 0:
            vecs[:, k] = -vecs[:, k]
    return vals, vecs


def total_variance(eigenvalues, n: int):
    """``(sum of the n leading eigenvalues) / N`` and its share of the
    full-space value."""
    D = np.asarray(eigenvalues, dtype=float)
    N = D.shape[0]
    if not 1 <= n <= N:
        raise ConfigError(f"n must lie in [1, {N}], got {n}")
    T_n = float(np.sum(D[:n])) / N
    T_N = float(np.sum(D)) / N
    frac = T_n / T_N if T_N > 0 else 1.0
    return T_n, frac


def fit_pca(data, n_keep: int | None = None, variance_fraction: float | None = None) -> PcaModel:
    """Fit PCA keeping a fixed number of components or the fewest that
    reach ``variance_fraction`` of the total variance."""
    if n_keep is not None and variance_fraction is not None:
        raise ConfigError("give n_keep or variance_fraction, not both")
    if variance_fraction is not None and not 0.0 < variance_fraction <= 1.0:
        raise ConfigError(f"variance_fraction must lie in (0, 1], got {variance_fraction}")
    X = np.asarray(data, dtype=float)
    C = covariance(X)
    vals, vecs = eig_symmetric(C)
    vals = np.where((vals < 0) & (vals >= -1e-10), 0.0, vals)
    N = vals.shape[0]
    if variance_fraction is not None:
        k = N
        for n in range(1, N + 1):
            if total_variance(vals, n)[1] >= variance_fraction - 1e-12:
                k = n
                break
    else:
        k = DEFAULT_N_KEEP if n_keep is None else n_keep
        if not 1 <= k:
            raise ConfigError(f"n_keep must be >= 1, got {k}")
        k = min(k, N)
    return PcaModel(X.mean(axis=0), vals, vecs, k)


def project(model: PcaModel, x) -> np.ndarray:
    """Coordinates of ``x`` (one vector or a row matrix) in the kept basis."""
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != model.mean.shape[0]:
        raise ContractError(f"expected dimension {model.mean.shape[0]}, got {x.shape[-1]}")
    return (x - model.mean) @ model.components


def save_pca(model: PcaModel, path) -> None:
    """Mean row, eigenvalue row, then the eigenvector matrix rows."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["n_keep", model.n_keep])
        w.writerow(["mean"] + [repr(float(v)) for v in model.mean])
        w.writerow(["eigenvalues"] + [repr(float(v)) for v in model.eigenvalues])
        for i, row in enumerate(model.eigenvectors):
            w.writerow([f"k{i}"] + [repr(float(v)) for v in row])


def load_pca(path) -> PcaModel:
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    n_keep = int(rows[0][1])
    mean = np.array([float(v) for v in rows[1][1:]])
    vals = np.array([float(v) for v in rows[2][1:]])
    vecs = np.array([[float(v) for v in r[1:]] for r in rows[3:]])
    return PcaModel(mean, vals, vecs, n_keep)
