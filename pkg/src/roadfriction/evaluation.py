"""Cross-validation harness, confusion-matrix metrics and sweeps.

Labels follow the dataset encoding (1 = high friction, 0 = slippery);
the confusion matrix treats slippery as the positive class.
"""

from __future__ import annotations

import csv
import hashlib
import io
import logging
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import logreg, mlp, pca, svm
from .dataset import HIGH_FRICTION, SLIPPERY
from .errors import ConfigError, ContractError, DegenerateLabelsError, RoadFrictionError
from .structuring import fit_norm, normalize

log = logging.getLogger(__name__)

POSITIVE = SLIPPERY
REPORT_HEADER = ("classifier", "horizon_min", "error_rate", "sensitivity", "specificity",
                 "k", "repeats", "seed")
FOLD_HEADER = ("classifier", "horizon_min", "repeat", "fold", "tp", "fp", "tn", "fn")
MAX_RESPLITS = 10


def derive_seed(*parts: int) -> int:
    """Stable 32-bit seed from a tuple of non-negative integers."""
    return int(np.random.SeedSequence([int(p) for p in parts]).generate_state(1)[0])


# ------------------------------------------------------------------ folds


@dataclass(frozen=True)
class FoldPlan:
    k: int
    assignments: np.ndarray
    seed: int

    def validation(self, i: int) -> np.ndarray:
        return np.flatnonzero(self.assignments == i)

    def training(self, i: int) -> np.ndarray:
        return np.flatnonzero(self.assignments != i)

    def sizes(self) -> np.ndarray:
        return np.bincount(self.assignments, minlength=self.k)


def kfold_split(n: int, k: int = 5, seed: int = 0) -> FoldPlan:
    """Seeded shuffle, then contiguous chunks; the first ``n % k`` folds
    get one extra sample."""
    if k < 2:
        raise ConfigError(f"k must be >= 2, got {k}")
    if k > n:
        raise ConfigError(f"k={k} exceeds the number of samples {n}")
    perm = np.random.default_rng(seed).permutation(n)
    assign = np.empty(n, dtype=int)
    for f, chunk in enumerate(np.array_split(perm, k)):
        assign[chunk] = f
    return FoldPlan(k, assign, seed)


# ---------------------------------------------------------------- metrics


@dataclass(frozen=True)
class Confusion:
    tp: int = 0
    fp: int = 0
    tn: int = 0
    fn: int = 0

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.tn + self.fn

    def __add__(self, other: "Confusion") -> "Confusion":
        return Confusion(self.tp + other.tp, self.fp + other.fp,
                         self.tn + other.tn, self.fn + other.fn)


def confusion(predictions, labels) -> Confusion:
    p = np.asarray(predictions).ravel()
    t = np.asarray(labels).ravel()
    if p.shape != t.shape:
        raise ContractError(f"{p.size} predictions for {t.size} labels")
    pos_p = p == POSITIVE
    pos_t = t == POSITIVE
    return Confusion(
        tp=int(np.sum(pos_p & pos_t)),
        fp=int(np.sum(pos_p & ~pos_t)),
        tn=int(np.sum(~pos_p & ~pos_t)),
        fn=int(np.sum(~pos_p & pos_t)),
    )


@dataclass(frozen=True)
class Metrics:
    error_rate: float
    sensitivity: float | None
    specificity: float | None


def metrics(c: Confusion) -> Metrics:
    """Undefined ratios come back as None rather than 0."""
    if c.total <= 0:
        raise ContractError("metrics of an empty confusion matrix")
    sens = c.tp / (c.tp + c.fn) if c.tp + c.fn else None
    spec = c.tn / (c.tn + c.fp) if c.tn + c.fp else None
    return Metrics((c.fn + c.fp) / c.total, sens, spec)


def _mean_defined(values):
    vals = [v for v in values if v is not None]
    return math.fsum(vals) / len(vals) if vals else None


# ------------------------------------------------------------ classifiers


class Fitted:
    """A trained model. ``artifact`` serializes every learned parameter."""

    def predict(self, X) -> np.ndarray:
        raise NotImplementedError

    def artifact(self) -> bytes:
        raise NotImplementedError


def _arrays_bytes(*arrays) -> bytes:
    buf = io.BytesIO()
    for a in arrays:
        np.save(buf, np.ascontiguousarray(a), allow_pickle=False)
    return buf.getvalue()


class Constant:
    """Always predicts one label; a degenerate reference classifier."""

    name = "CONST"

    def __init__(self, label: int = SLIPPERY):
        self.label = label

    def fit(self, X, y, target=None, seed=0):
        lab = self.label

        class _F(Fitted):
            def predict(self, Z):
                return np.full(len(Z), lab, dtype=int)

            def artifact(self):
                return str(lab).encode()

        return _F()


class LogReg:
    name = "LR"

    def __init__(self, ridge: float = 1e-8, max_iter: int = 100):
        self.ridge = ridge
        self.max_iter = max_iter

    def fit(self, X, y, target=None, seed=0):
        model = logreg.fit_irls(X, y, max_iter=self.max_iter, ridge=self.ridge)

        class _F(Fitted):
            def predict(self, Z):
                return logreg.predict(model, Z)

            def artifact(self):
                return _arrays_bytes(model.beta)

        return _F()


class Svm:
    """RBF SVM. ``sigma=None`` uses the median pairwise training distance."""

    name = "SVM"

    def __init__(self, C: float = 1.0, sigma: float | None = None, tol: float = 1e-3):
        self.C = C
        self.sigma = sigma
        self.tol = tol

    def fit(self, X, y, target=None, seed=0):
        ys = np.where(np.asarray(y) == HIGH_FRICTION, 1.0, -1.0)
        kernel = svm.KernelSpec(self.sigma) if self.sigma else None
        try:
            model = svm.fit_smo(X, ys, self.C, kernel, tol=self.tol)
        except svm.ConvergenceError as exc:
            log.warning("%s; using the last iterate", exc)
            model = exc.best

        class _F(Fitted):
            def predict(self, Z):
                return np.where(svm.predict(model, Z) > 0, HIGH_FRICTION, SLIPPERY)

            def artifact(self):
                return _arrays_bytes(model.alphas, model.support_vectors, np.array([model.b]))

        return _F()


class Mlp:
    """Feedforward net trained on the continuous friction target when one
    is given (regression mode), otherwise on the labels. A seeded slice
    of the training fold is held out for checkpointing."""

    name = "ANN"

    def __init__(self, n_hidden: int = 1, hidden_width: int | None = None,
                 hidden_activation: str = "relu", cost: str = "sse",
                 optimizer: mlp.OptimizerSpec = mlp.OptimizerSpec(),
                 epochs: int = 500, patience: int | None = 50, threshold: float = 0.5,
                 holdout: float = 0.2):
        if not 0.0 < holdout < 1.0:
            raise ConfigError("holdout must lie in (0, 1)")
        self.n_hidden = n_hidden
        self.hidden_width = hidden_width
        self.hidden_activation = hidden_activation
        self.cost = cost
        self.optimizer = optimizer
        self.epochs = epochs
        self.patience = patience
        self.threshold = threshold
        self.holdout = holdout

    def fit(self, X, y, target=None, seed=0):
        X = np.asarray(X, dtype=float)
        y = np.asarray(y)
        regress = target is not None and self.cost == "sse"
        D = np.asarray(target, dtype=float) if regress else y.astype(float)
        thr = self.threshold if regress else 0.5
        width = self.hidden_width or X.shape[1]
        out_act = "sigmoid" if self.cost == "bce" else "linear"
        topo = mlp.MlpTopology((X.shape[1],) + (width,) * self.n_hidden + (1,),
                               mlp.Activation(self.hidden_activation), mlp.Activation(out_act), seed)
        perm = np.random.default_rng(derive_seed(seed, 7)).permutation(len(y))
        n_val = max(1, int(round(self.holdout * len(y))))
        va, tr = perm[:n_val], perm[n_val:]
        model = mlp.init_model(topo)
        mlp.fit(model, (X[tr], D[tr]), (X[va], y[va]), self.cost, self.optimizer,
                self.epochs, thr, self.patience)

        class _F(Fitted):
            def predict(self, Z):
                return mlp.predict(model, np.atleast_2d(Z), thr)

            def artifact(self):
                return _arrays_bytes(*model.weights)

        return _F()


@dataclass
class Pipeline:
    """Normalization and optional PCA fitted on the training fold only,
    then the classifier."""

    classifier: object
    normalize: bool = True
    pca_keep: int | None = None
    label: str | None = None

    @property
    def name(self) -> str:
        return self.label or self.classifier.name

    def fit(self, X, y, target=None, seed=0) -> Fitted:
        X = np.asarray(X, dtype=float)
        stats = fit_norm(X) if self.normalize else None
        Xt = normalize(X, stats) if stats is not None else X
        model_pca = None
        if self.pca_keep:
            model_pca = pca.fit_pca(Xt, n_keep=self.pca_keep)
            Xt = pca.project(model_pca, Xt)
        inner = self.classifier.fit(Xt, y, target, seed)

        class _F(Fitted):
            def transform(self, Z):
                Z = np.asarray(Z, dtype=float)
                if stats is not None:
                    Z = normalize(Z, stats)
                if model_pca is not None:
                    Z = pca.project(model_pca, Z)
                return Z

            def predict(self, Z):
                return inner.predict(self.transform(Z))

            def artifact(self):
                parts = []
                if stats is not None:
                    parts.append(_arrays_bytes(stats.mean, stats.std))
                if model_pca is not None:
                    parts.append(_arrays_bytes(model_pca.mean, model_pca.components))
                parts.append(inner.artifact())
                return b"".join(parts)

        return _F()


# ------------------------------------------------------- cross-validation


@dataclass
class FoldResult:
    repeat: int
    fold: int
    confusion: Confusion
    artifact_digest: str = ""


@dataclass
class EvalReport:
    classifier: str
    horizon: int
    k: int
    repeats: int
    seed: int
    error_rate: float | None = None
    sensitivity: float | None = None
    specificity: float | None = None
    per_fold: list = field(default_factory=list)
    failed: str | None = None

    @property
    def pooled(self) -> Confusion:
        total = Confusion()
        for f in self.per_fold:
            total = total + f.confusion
        return total

    def row(self) -> list:
        def fmt(v):
            return "" if v is None else f"{v:.4f}"

        if self.failed:
            metrics_cols = ["failed"] * 3
        else:
            metrics_cols = [fmt(self.error_rate), fmt(self.sensitivity), fmt(self.specificity)]
        return [self.classifier, self.horizon // 60] + metrics_cols + [self.k, self.repeats, self.seed]


def _plan_for(y, k, seed, repeat):
    """Fold plan whose every training set holds both classes; tries up to
    MAX_RESPLITS derived seeds."""
    for attempt in range(MAX_RESPLITS):
        plan = kfold_split(len(y), k, derive_seed(seed, repeat, attempt))
        if all(np.unique(y[plan.training(i)]).size == 2 for i in range(k)):
            return plan
    raise DegenerateLabelsError(
        f"no split with two-class training folds after {MAX_RESPLITS} attempts")


def cross_validate(X, y, classifier, k: int = 5, repeats: int = 5, seed: int = 0,
                   target=None, horizon: int = 0, keep_artifacts: bool = False) -> EvalReport:
    """Repeated k-fold CV. Per repeat, fold confusions are pooled before
    computing metrics; metrics are then averaged over repeats."""
    X = np.asarray(X, dtype=float)
    y = np.asarray(y).astype(int)
    tgt = None if target is None else np.asarray(target, dtype=float)
    if np.unique(y).size < 2:
        raise DegenerateLabelsError("dataset contains a single class")
    if repeats < 1:
        raise ConfigError("repeats must be >= 1")
    report = EvalReport(classifier.name, horizon, k, repeats, seed)
    per_repeat = []
    for r in range(repeats):
        plan = _plan_for(y, k, seed, r)
        pooled = Confusion()
        for i in range(k):
            tr, va = plan.training(i), plan.validation(i)
            fitted = classifier.fit(X[tr], y[tr], None if tgt is None else tgt[tr],
                                    derive_seed(seed, r, i, 1))
            c = confusion(fitted.predict(X[va]), y[va])
            digest = hashlib.sha256(fitted.artifact()).hexdigest() if keep_artifacts else ""
            report.per_fold.append(FoldResult(r, i, c, digest))
            pooled = pooled + c
        per_repeat.append(metrics(pooled))
    report.error_rate = _mean_defined([m.error_rate for m in per_repeat])
    report.sensitivity = _mean_defined([m.sensitivity for m in per_repeat])
    report.specificity = _mean_defined([m.specificity for m in per_repeat])
    return report


def sweep(dataset, grid: Sequence, k: int = 5, repeats: int = 5, seed: int = 0,
          horizon: int = 0) -> list[EvalReport]:
    """One report per grid entry, in order.

    Each grid entry is a classifier (or pipeline). ``dataset`` is either
    ``(X, y, target)`` or a callable mapping the entry to such a tuple,
    which lets an entry change how the features are built. A failing entry
    yields a report with ``failed`` set; the sweep carries on.
    """
    if not grid:
        raise ConfigError("empty sweep grid")
    out = []
    for entry in grid:
        try:
            X, y, target = dataset(entry) if callable(dataset) else dataset
            out.append(cross_validate(X, y, entry, k, repeats, seed, target, horizon))
        except (RoadFrictionError, ValueError, np.linalg.LinAlgError) as exc:
            log.error("sweep entry %s failed: %s", getattr(entry, "name", entry), exc)
            out.append(EvalReport(getattr(entry, "name", str(entry)), horizon, k, repeats, seed,
                                  failed=str(exc)))
    return out


def winner(reports: Sequence[EvalReport]) -> int:
    """Index of the lowest error rate; ties go to higher sensitivity."""
    ok = [i for i, r in enumerate(reports) if not r.failed and r.error_rate is not None]
    if not ok:
        raise ContractError("no successful report to choose from")
    return min(ok, key=lambda i: (reports[i].error_rate, -(reports[i].sensitivity or 0.0), i))


def svm_grid(X, y, Cs=(0.1, 1.0, 10.0), sigma_factors=(0.5, 1.0, 2.0), k: int = 3,
             seed: int = 0) -> tuple[float, float]:
    """(C, sigma) with the lowest inner-CV error, sigma scaled from the
    median training distance. Meant to run inside a training fold."""
    base = svm.median_distance(np.asarray(X, dtype=float))
    grid = [Svm(C, base * s) for C in Cs for s in sigma_factors]
    reports = sweep((X, y, None), grid, k, 1, seed)
    best = grid[winner(reports)]
    return best.C, best.sigma


# ----------------------------------------------------------------- output


def write_report_csv(reports: Sequence[EvalReport], path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(REPORT_HEADER)
        for r in reports:
            w.writerow(r.row())


def write_fold_csv(reports: Sequence[EvalReport], path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(FOLD_HEADER)
        for r in reports:
            for f in r.per_fold:
                c = f.confusion
                w.writerow([r.classifier, r.horizon // 60, f.repeat, f.fold, c.tp, c.fp, c.tn, c.fn])


def format_table(reports: Sequence[EvalReport], title: str = "") -> str:
    """Plain-text table: one block per classifier, one row per horizon."""
    lines = [title] if title else []
    lines.append(f"{'':5}{'horizon':>8}  {'Error rate':>10}  {'Sensitivity':>11}  {'Specificity':>11}")
    last = None
    for r in reports:
        if last is not None and r.classifier != last:
            lines.append("")
        name = r.classifier if r.classifier != last else ""
        last = r.classifier
        cols = r.row()[2:5]
        lines.append(f"{name:5}{r.horizon // 60:>8}  {cols[0]:>10}  {cols[1]:>11}  {cols[2]:>11}")
    return "\n".join(lines) + "\n"
