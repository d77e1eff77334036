"""Command-line entry point: ``roadfriction {synth,embed,experiment,sweep}``.

Configuration is a flat ``key=value`` document (``--config``) with
``--set key=value`` overrides. Every run writes ``manifest.cfg`` into the
output directory; feeding it back through ``--config`` reproduces the run.
"""

from __future__ import annotations

import argparse
import csv
import logging
import os
import sys
from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import __version__
from . import dataset as ds
from . import evaluation as ev
from . import mlp, pca, sne
from . import structuring as st
from .errors import ConfigError, InsufficientDataError, RoadFrictionError

log = logging.getLogger("roadfriction")

EXIT_OK = 0
EXIT_FAILED_CELL = 1
EXIT_CONFIG = 2

CLASSIFIERS = ("LR", "SVM", "ANN")
SWEEP_PARAMS = {
    "interval": "interval_min",
    "history": "history_hours",
    "hidden_layers": "hidden_layers",
    "horizon": "horizon_min",
}


# ----------------------------------------------------------------- config


def _bool(text: str) -> bool:
    t = text.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _ints(text: str) -> tuple:
    return tuple(int(v) for v in text.split(",") if v.strip())


def _floats(text: str) -> tuple:
    return tuple(float(v) for v in text.split(",") if v.strip())


def _names(text: str) -> tuple:
    return tuple(v.strip() for v in text.split(",") if v.strip())


@dataclass(frozen=True)
class Key:
    default: str
    parse: Callable
    doc: str


_CORR_KEYS = {f"corr.{name}": Key(repr(r), float, f"target correlation of {name} with friction")
              for name, r in ds.DEFAULT_CORRELATIONS.items()}

KEYS = {
    "seed": Key("0", int, "global seed; every other seed is derived from it"),
    "out_dir": Key("out", str, "output directory"),
    "data": Key("", str, "measurement CSV; empty means synthesize"),
    "log_level": Key("INFO", str, "logging level"),
    # synthetic data
    "segments": Key("3", int, "number of independently seeded synthetic segments"),
    "n_samples": Key("4500", int, "total synthetic records, split evenly over segments"),
    "slippery_fraction": Key("0.4", float, "share of slippery records"),
    "noise_scale": Key("0.1", float, "observation noise on covariates (latent sd units)"),
    "mean_gap_s": Key("600", float, "mean gap between records in seconds"),
    "time_constant_s": Key("1800", float, "AR(1) time constant in seconds"),
    "low_confidence_fraction": Key("0.05", float, "share of records with confidence 0"),
    **_CORR_KEYS,
    # labels and windows
    "friction_threshold": Key("0.5", float, "friction below this is slippery"),
    "min_confidence": Key("1", int, "drop records with lower confidence"),
    "window_hours": Key("3", float, "window length T"),
    "f_s": Key("6", int, "resampled columns per window"),
    "interval_min": Key("2", float, "quantization interval in minutes"),
    "history_hours": Key("3", float, "friction history span (max 4)"),
    "radius_km": Key("3.334", float, "spatial filter radius around the anchor record"),
    "horizon_mode": Key("lookahead", str, "lookahead or shift"),
    "imputation": Key("neighbor", str, "neighbor or inverse_distance"),
    "label_tolerance_min": Key("15", float, "lookahead: max delay of the label record after t + horizon"),
    "horizons": Key("0,30,60,90,120", _ints, "prediction horizons in minutes"),
    # models
    "classifiers": Key("LR,SVM,ANN", _names, "classifiers to evaluate"),
    "pca_keep": Key("14", int, "principal components kept for LR and SVM"),
    "ann_pca": Key("false", _bool, "also apply PCA before the ANN"),
    "lr.ridge": Key("1e-08", float, "Hessian ridge for IRLS"),
    "svm.C": Key("1.0", float, "soft-margin penalty"),
    "svm.sigma": Key("0", float, "RBF width; 0 means median training distance"),
    "svm.grid": Key("false", _bool, "inner grid search over C and sigma"),
    "svm.tol": Key("0.001", float, "KKT tolerance"),
    "ann.hidden_layers": Key("1", int, "number of hidden layers"),
    "ann.hidden_width": Key("0", int, "hidden width; 0 means the input dimension"),
    "ann.activation": Key("relu", str, "hidden activation"),
    "ann.cost": Key("sse", str, "sse (regression on friction) or bce"),
    "ann.optimizer": Key("adam", str, "gd, sgd, momentum or adam"),
    "ann.eta": Key("0.01", float, "learning rate"),
    "ann.alpha": Key("0.9", float, "momentum coefficient"),
    "ann.batch_size": Key("16", int, "mini-batch size for sgd and adam"),
    "ann.epochs": Key("500", int, "epoch cap"),
    "ann.patience": Key("50", int, "epochs without validation gain before stopping; 0 disables"),
    # evaluation
    "cv.k": Key("5", int, "folds"),
    "cv.repeats": Key("5", int, "repeated CV runs averaged"),
    # embed
    "embed.segment": Key("", str, "segment to embed; empty means the first"),
    "embed.max_points": Key("500", int, "subsample size for SNE"),
    "sne.perplexity": Key("30", float, "SNE perplexity"),
    "sne.n_iter": Key("500", int, "SNE iterations"),
    "sne.eta": Key("0.1", float, "SNE learning rate"),
    # sweep
    "sweep.param": Key("interval", str, "interval, history, hidden_layers or horizon"),
    "sweep.values": Key("2,5,10,30,60", _floats, "values of the swept parameter"),
    "sweep.classifiers": Key("ANN", _names, "classifiers evaluated at each value"),
    "sweep.segment": Key("", str, "segment to sweep; empty means the first"),
    "sweep.horizon_min": Key("0", int, "horizon used while sweeping other parameters"),
}


def parse_config_text(text: str, source: str = "<config>") -> dict:
    """Raw ``key -> value`` strings. ``#`` starts a comment line."""
    out = {}
    for n, line in enumerate(text.splitlines(), 1):
        s = line.strip()
        if not s or s.startswith("#"):
            continue
        if "=" not in s:
            raise ConfigError(f"{source}:{n}: expected key=value, got {s!r}")
        k, v = s.split("=", 1)
        out[k.strip()] = v.strip()
    return out


def resolve(raw: dict) -> dict:
    """Typed config with defaults filled in. Unknown keys are errors."""
    unknown = sorted(set(raw) - set(KEYS) - {"command"})
    if unknown:
        raise ConfigError(f"unknown config key(s): {', '.join(unknown)}")
    cfg = {}
    for k, spec in KEYS.items():
        text = raw.get(k, spec.default)
        try:
            cfg[k] = spec.parse(text)
        except ValueError as exc:
            raise ConfigError(f"bad value for {k}: {text!r} ({exc})") from None
    cfg["_raw"] = {k: raw.get(k, spec.default) for k, spec in KEYS.items()}
    _validate(cfg)
    return cfg


def _validate(cfg: dict):
    for name in cfg["classifiers"] + cfg["sweep.classifiers"]:
        if name not in CLASSIFIERS:
            raise ConfigError(f"unknown classifier {name!r}; choose from {CLASSIFIERS}")
    if cfg["sweep.param"] not in SWEEP_PARAMS:
        raise ConfigError(f"unknown sweep.param {cfg['sweep.param']!r}")
    if cfg["segments"] < 1:
        raise ConfigError("segments must be >= 1")
    if cfg["n_samples"] < cfg["segments"]:
        raise ConfigError("n_samples must be at least the number of segments")
    if cfg["horizon_mode"] not in ("lookahead", "shift"):
        raise ConfigError("horizon_mode must be lookahead or shift")
    if cfg["imputation"] not in st.IMPUTERS:
        raise ConfigError(f"imputation must be one of {sorted(st.IMPUTERS)}")
    if cfg["ann.activation"] not in mlp.ACTIVATIONS:
        raise ConfigError(f"unknown ann.activation {cfg['ann.activation']!r}")
    if cfg["ann.cost"] not in ("sse", "bce"):
        raise ConfigError("ann.cost must be sse or bce")
    if cfg["cv.k"] < 2 or cfg["cv.repeats"] < 1:
        raise ConfigError("need cv.k >= 2 and cv.repeats >= 1")
    if any(h < 0 for h in cfg["horizons"]) or not cfg["horizons"]:
        raise ConfigError("horizons must be a non-empty list of non-negative minutes")
    if cfg["embed.max_points"] < 3:
        raise ConfigError("embed.max_points must be >= 3")


def load_config(path: str | None, overrides: list[str]) -> dict:
    raw = {}
    if path:
        try:
            with open(path, encoding="utf-8") as fh:
                raw.update(parse_config_text(fh.read(), path))
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from None
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"--set expects key=value, got {item!r}")
        k, v = item.split("=", 1)
        raw[k.strip()] = v.strip()
    return resolve(raw)


def write_manifest(cfg: dict, command: str, extra: dict | None = None) -> str:
    path = os.path.join(cfg["out_dir"], "manifest.cfg")
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(f"# roadfriction {__version__}\n")
        fh.write(f"command={command}\n")
        for k in KEYS:
            fh.write(f"{k}={cfg['_raw'][k]}\n")
        for k, v in (extra or {}).items():
            fh.write(f"# {k}={v}\n")
    return path


# --------------------------------------------------------------- builders


def synth_configs(cfg: dict) -> list[ds.SynthConfig]:
    n_seg = cfg["segments"]
    base, extra = divmod(cfg["n_samples"], n_seg)
    corr = {name: cfg[f"corr.{name}"] for name in ds.DEFAULT_CORRELATIONS}
    out = []
    for k in range(n_seg):
        out.append(ds.SynthConfig(
            n_samples=base + (1 if k < extra else 0),
            seed=ev.derive_seed(cfg["seed"], 100 + k),
            slippery_fraction=cfg["slippery_fraction"],
            feature_correlations=corr,
            noise_scale=cfg["noise_scale"],
            friction_threshold=cfg["friction_threshold"],
            segment_id=f"seg{k + 1}",
            # segments far enough apart that the radius filter keeps them separate
            center=(57.7089 + 0.5 * k, 11.9746),
            mean_gap=cfg["mean_gap_s"],
            time_constant=cfg["time_constant_s"],
            low_confidence_fraction=cfg["low_confidence_fraction"],
        ))
    return out


def policy_of(cfg: dict) -> ds.LabelPolicy:
    return ds.LabelPolicy(cfg["friction_threshold"], cfg["min_confidence"])


def window_spec(cfg: dict, horizon_min: float = 0, interval_min: float | None = None,
                history_hours: float | None = None) -> st.WindowSpec:
    interval = cfg["interval_min"] if interval_min is None else interval_min
    history = cfg["history_hours"] if history_hours is None else history_hours
    return st.WindowSpec(
        T=int(round(cfg["window_hours"] * 3600)),
        f_s=cfg["f_s"],
        horizon=int(round(horizon_min * 60)),
        quantize_interval=int(round(interval * 60)),
        history_span=int(round(history * 3600)),
        radius_km=cfg["radius_km"],
        label_tolerance=int(round(cfg["label_tolerance_min"] * 60)),
    )


def load_segments(cfg: dict) -> dict:
    """``segment_id -> time-sorted records`` after the confidence filter."""
    policy = policy_of(cfg)
    if cfg["data"]:
        records = ds.load_measurements(cfg["data"], policy)
    else:
        records = []
        for sc in synth_configs(cfg):
            records.extend(m for m in ds.synthesize(sc) if m.confidence >= policy.min_confidence)
        if not records:
            raise ds.EmptyDatasetError("no synthetic records survived the confidence filter")
    segs: dict = {}
    for m in records:
        segs.setdefault(m.segment_id, []).append(m)
    return {k: sorted(v, key=lambda m: m.timestamp) for k, v in sorted(segs.items())}


def feature_matrix(records, cfg: dict, spec: st.WindowSpec):
    stream = st.quantize(records, spec.quantize_interval)
    report = st.BuildReport()
    samples = st.build_samples(stream, spec, policy_of(cfg), cfg["horizon_mode"],
                               cfg["imputation"], report)
    if not samples:
        raise InsufficientDataError(f"no labeled windows could be built ({report})")
    X = np.array([s.z for s in samples])
    y = np.array([s.label for s in samples])
    target = np.array([s.target for s in samples])
    return X, y, target


def make_classifier(name: str, cfg: dict, hidden_layers: int | None = None) -> ev.Pipeline:
    if name == "LR":
        return ev.Pipeline(ev.LogReg(cfg["lr.ridge"]), pca_keep=cfg["pca_keep"])
    if name == "SVM":
        inner = ev.Svm(cfg["svm.C"], cfg["svm.sigma"] or None, cfg["svm.tol"])
        if cfg["svm.grid"]:
            inner = _GridSvm(inner, cfg["seed"])
        return ev.Pipeline(inner, pca_keep=cfg["pca_keep"])
    opt = mlp.OptimizerSpec(cfg["ann.optimizer"], cfg["ann.eta"], cfg["ann.alpha"],
                            batch_size=cfg["ann.batch_size"])
    inner = ev.Mlp(
        n_hidden=cfg["ann.hidden_layers"] if hidden_layers is None else hidden_layers,
        hidden_width=cfg["ann.hidden_width"] or None,
        hidden_activation=cfg["ann.activation"],
        cost=cfg["ann.cost"],
        optimizer=opt,
        epochs=cfg["ann.epochs"],
        patience=cfg["ann.patience"] or None,
        threshold=cfg["friction_threshold"],
    )
    return ev.Pipeline(inner, pca_keep=cfg["pca_keep"] if cfg["ann_pca"] else None)


class _GridSvm:
    """Picks (C, sigma) by inner CV on the training fold, then refits."""

    name = "SVM"

    def __init__(self, base: ev.Svm, seed: int):
        self.base = base
        self.seed = seed

    def fit(self, X, y, target=None, seed=0):
        C, sigma = ev.svm_grid(X, y, seed=seed)
        return ev.Svm(C, sigma, self.base.tol).fit(X, y, target, seed)


def _pick_segment(segs: dict, wanted: str) -> str:
    if not wanted:
        return next(iter(segs))
    if wanted not in segs:
        raise ConfigError(f"segment {wanted!r} not found; have {', '.join(segs)}")
    return wanted


# --------------------------------------------------------------- commands


def cmd_synth(cfg: dict) -> int:
    records, extra = [], {}
    for sc in synth_configs(cfg):
        out = ds.generate(sc)
        records.extend(out.records)
        extra[f"bayes_error.{sc.segment_id}"] = repr(out.bayes_error)
        for name, n in out.clipped.items():
            extra[f"clipped.{sc.segment_id}.{name}"] = n
        extra[f"seed.{sc.segment_id}"] = sc.seed
    path = os.path.join(cfg["out_dir"], "measurements.csv")
    ds.save_measurements(records, path)
    write_manifest(cfg, "synth", extra)
    log.info("wrote %d records to %s", len(records), path)
    return EXIT_OK


def correlation_matrix(records) -> tuple[list, np.ndarray]:
    names = list(ds.CHANNELS)
    M = np.array([[m.channel(c) for c in names] for m in records], dtype=float)
    M = M[np.all(np.isfinite(M), axis=1)]
    if M.shape[0] < 3:
        raise InsufficientDataError("need at least 3 complete records for a correlation matrix")
    R = np.corrcoef(M, rowvar=False)
    np.fill_diagonal(R, 1.0)
    return names, R


def cmd_embed(cfg: dict) -> int:
    segs = load_segments(cfg)
    seg = _pick_segment(segs, cfg["embed.segment"])
    records = segs[seg]
    out_dir = cfg["out_dir"]

    names, R = correlation_matrix(records)
    with open(os.path.join(out_dir, "correlation.csv"), "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([""] + names)
        for name, row in zip(names, R):
            w.writerow([name] + [f"{v:.6f}" for v in row])

    X, y, _ = feature_matrix(records, cfg, window_spec(cfg))
    if X.shape[0] < 3:
        raise InsufficientDataError("need at least 3 samples to embed")
    Z = st.normalize(X, st.fit_norm(X))
    model = pca.fit_pca(Z, n_keep=2)
    P2 = pca.project(model, Z)
    with open(os.path.join(out_dir, "pca_2d.csv"), "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["point_id", "label", "pc0", "pc1"])
        for i, (row, lab) in enumerate(zip(P2, y)):
            w.writerow([i, int(lab), repr(float(row[0])), repr(float(row[1]))])
    with open(os.path.join(out_dir, "pca_variance.csv"), "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["n", "eigenvalue", "T_n", "fraction"])
        for n in range(1, len(model.eigenvalues) + 1):
            T_n, frac = pca.total_variance(model.eigenvalues, n)
            w.writerow([n, repr(float(model.eigenvalues[n - 1])), repr(T_n), repr(frac)])

    rng = np.random.default_rng(ev.derive_seed(cfg["seed"], 200))
    m = min(cfg["embed.max_points"], Z.shape[0])
    idx = np.sort(rng.choice(Z.shape[0], size=m, replace=False))
    sc = sne.SneConfig(perplexity=cfg["sne.perplexity"], n_iter=cfg["sne.n_iter"],
                       eta=cfg["sne.eta"], seed=ev.derive_seed(cfg["seed"], 201))
    state = sne.embed(Z[idx], sc)
    sne.write_embedding_csv(state.Y, [int(v) for v in y[idx]], os.path.join(out_dir, "sne.csv"))
    write_manifest(cfg, "embed", {"segment": seg, "samples": X.shape[0], "sne_points": m,
                                  "sne_final_cost": repr(state.cost_history[-1]) if state.cost_history else ""})
    return EXIT_OK


def _run_cell(name, build: Callable, horizon_s: int, cfg: dict) -> ev.EvalReport:
    try:
        X, y, target = build()
        clf = make_classifier(name, cfg)
        return ev.cross_validate(X, y, clf, cfg["cv.k"], cfg["cv.repeats"], cfg["seed"],
                                 target, horizon_s)
    except (RoadFrictionError, ValueError, np.linalg.LinAlgError) as exc:
        log.error("cell %s / %d min failed: %s", name, horizon_s // 60, exc)
        return ev.EvalReport(name, horizon_s, cfg["cv.k"], cfg["cv.repeats"], cfg["seed"],
                             failed=str(exc))


def cmd_experiment(cfg: dict) -> int:
    segs = load_segments(cfg)
    failed = 0
    extra = {}
    for seg, records in segs.items():
        cache: dict = {}

        def build(h, _records=records, _cache=cache):
            if h not in _cache:
                _cache[h] = feature_matrix(_records, cfg, window_spec(cfg, h))
            return _cache[h]

        reports = []
        for name in cfg["classifiers"]:
            for h in cfg["horizons"]:
                r = _run_cell(name, lambda h=h: build(h), int(h * 60), cfg)
                log.info("%s %s %3d min: error %s", seg, name, h, r.row()[2])
                failed += bool(r.failed)
                reports.append(r)
        ev.write_report_csv(reports, os.path.join(cfg["out_dir"], f"table_{seg}.csv"))
        ev.write_fold_csv(reports, os.path.join(cfg["out_dir"], f"folds_{seg}.csv"))
        with open(os.path.join(cfg["out_dir"], f"table_{seg}.txt"), "w", encoding="utf-8") as fh:
            fh.write(ev.format_table(reports, f"Road segment {seg}"))
        extra[f"samples.{seg}"] = ",".join(str(len(v[1])) for _, v in sorted(cache.items()))
    extra["failed_cells"] = failed
    write_manifest(cfg, "experiment", extra)
    return EXIT_FAILED_CELL if failed else EXIT_OK


def cmd_sweep(cfg: dict) -> int:
    segs = load_segments(cfg)
    seg = _pick_segment(segs, cfg["sweep.segment"])
    records = segs[seg]
    param = cfg["sweep.param"]
    values = cfg["sweep.values"]
    h0 = cfg["sweep.horizon_min"]
    rows, failed = [], 0
    for name in cfg["sweep.classifiers"]:
        for v in values:
            if param == "interval":
                spec = window_spec(cfg, h0, interval_min=v)
            elif param == "history":
                spec = window_spec(cfg, h0, history_hours=v)
            elif param == "horizon":
                spec = window_spec(cfg, v)
            else:
                spec = window_spec(cfg, h0)
            layers = int(v) if param == "hidden_layers" else None
            if layers is not None and name != "ANN":
                raise ConfigError("hidden_layers sweeps apply to the ANN only")

            def run(spec=spec, layers=layers, name=name):
                X, y, target = feature_matrix(records, cfg, spec)
                clf = make_classifier(name, cfg, hidden_layers=layers)
                return ev.cross_validate(X, y, clf, cfg["cv.k"], cfg["cv.repeats"], cfg["seed"],
                                         target, spec.horizon)

            try:
                r = run()
            except ConfigError:
                raise
            except (RoadFrictionError, ValueError, np.linalg.LinAlgError) as exc:
                log.error("sweep %s=%s %s failed: %s", param, v, name, exc)
                r = ev.EvalReport(name, spec.horizon, cfg["cv.k"], cfg["cv.repeats"], cfg["seed"],
                                  failed=str(exc))
            failed += bool(r.failed)
            rows.append((v, r))
    col = SWEEP_PARAMS[param]
    path = os.path.join(cfg["out_dir"], f"sweep_{param}.csv")
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow((col,) + ev.REPORT_HEADER)
        for v, r in rows:
            w.writerow([_fmt_value(v)] + r.row())
    extra = {"segment": seg}
    for name in cfg["sweep.classifiers"]:
        mine = [(v, r) for v, r in rows if r.classifier == name]
        try:
            best = ev.winner([r for _, r in mine])
            extra[f"winner.{name}"] = _fmt_value(mine[best][0])
        except RoadFrictionError:
            extra[f"winner.{name}"] = "none"
    write_manifest(cfg, "sweep", extra)
    return EXIT_FAILED_CELL if failed else EXIT_OK


def _fmt_value(v: float) -> str:
    return str(int(v)) if float(v).is_integer() else repr(float(v))


COMMANDS = {"synth": cmd_synth, "embed": cmd_embed, "experiment": cmd_experiment,
            "sweep": cmd_sweep}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="roadfriction", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sp = sub.add_parser(name)
        sp.add_argument("--config", help="key=value config file (a manifest.cfg works too)")
        sp.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                        help="override one config key; repeatable")
    sub.add_parser("keys", help="list every config key with its default")
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # argparse exits 2 on usage errors already
        return int(exc.code or 0)
    if args.command == "keys":
        for k, spec in KEYS.items():
            print(f"{k}={spec.default}  # {spec.doc}")
        return EXIT_OK
    try:
        cfg = load_config(args.config, args.set)
        logging.basicConfig(level=getattr(logging, cfg["log_level"].upper(), logging.INFO),
                            format="%(levelname)s %(name)s: %(message)s")
        os.makedirs(cfg["out_dir"], exist_ok=True)
        return COMMANDS[args.command](cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (RoadFrictionError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAILED_CELL


if __name__ == "__main__":
    sys.exit(main())
