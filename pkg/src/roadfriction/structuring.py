"""Turning irregular measurement streams into fixed-size feature vectors.

Pipeline per labeled event: quantize the stream, cut the window
``(t - T, t]`` into ``f_s`` slots keeping the latest record per slot,
impute empty slots from observed ones, flatten column-major, z-score.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from .dataset import CHANNELS, LabelPolicy, Measurement, label
from .errors import ConfigError, ContractError, EmptyWindowError, InsufficientDataError

HISTORY_CAP = 4 * 3600
HISTORY_CHANNEL = "friction_history"
WINDOW_CHANNELS = CHANNELS + (HISTORY_CHANNEL,)


@dataclass(frozen=True)
class WindowSpec:
    T: int = 3 * 3600
    f_s: int = 6
    d: int = len(WINDOW_CHANNELS)
    horizon: int = 0
    quantize_interval: int = 120
    history_span: int = 3 * 3600
    radius_km: float = 3.334
    channels: tuple = WINDOW_CHANNELS
    label_tolerance: int = 900  # lookahead: accept a label this long after t + horizon

    def __post_init__(self):
        if self.f_s < 1 or self.T <= 0 or self.d < 1:
            raise ConfigError("need f_s >= 1, T > 0, d >= 1")
        if self.d != len(self.channels):
            raise ConfigError(f"d={self.d} but {len(self.channels)} channels configured")
        if self.quantize_interval <= 0 or self.quantize_interval > self.T:
            raise ConfigError("quantize_interval must lie in (0, T]")
        if self.horizon < 0:
            raise ConfigError("horizon must be >= 0")
        if not 0 < self.history_span <= HISTORY_CAP:
            raise ConfigError(f"history_span must lie in (0, {HISTORY_CAP}] seconds")
        if self.radius_km <= 0:
            raise ConfigError("radius_km must be positive")
        if self.label_tolerance <= 0:
            raise ConfigError("label_tolerance must be positive")


@dataclass
class StructuredWindow:
    """``values`` is d x f_s. ``missing_mask[k]`` is True when slot k held
    no record. Observed slots can still carry NaN entries for fields the
    kept record lacked; imputation fills those row by row."""

    values: np.ndarray
    missing_mask: np.ndarray
    t: int

    @property
    def entry_mask(self) -> np.ndarray:
        return ~np.isfinite(self.values)


@dataclass
class FeatureVector:
    z: np.ndarray
    label: int
    t: int
    segment_id: str
    target: float = math.nan
    horizon: int = 0


@dataclass
class NormStats:
    mean: np.ndarray
    std: np.ndarray
    flagged: np.ndarray = field(default=None)

    def __post_init__(self):
        if self.flagged is None:
            self.flagged = np.flatnonzero(self.std == 0)


# ------------------------------------------------------------ quantization


def _round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


def _mean(values):
    vals = [v for v in values if not math.isnan(v)]
    return math.fsum(vals) / len(vals) if vals else math.nan


def _median_ordinal(values):
    vals = [v for v in values if v is not None]
    if not vals:
        return None
    return _round_half_up(float(np.median(vals)))


def quantize(measurements: Sequence[Measurement], interval: int) -> list[Measurement]:
    """Average records falling into the same ``interval``-second bucket.

    Buckets are aligned to multiples of ``interval`` and kept per segment.
    Each output record is stamped with its bucket start.
    """
    if interval <= 0:
        raise ConfigError(f"interval must be positive, got {interval}")
    groups: dict = {}
    for m in measurements:
        key = (m.timestamp - m.timestamp % interval, m.segment_id)
        groups.setdefault(key, []).append(m)
    out = []
    for (start, seg), ms in sorted(groups.items()):
        out.append(Measurement(
            timestamp=max(start, 1),
            segment_id=seg,
            position=(_mean([m.position[0] for m in ms]), _mean([m.position[1] for m in ms])),
            friction=_mean([m.friction for m in ms]),
            confidence=_median_ordinal([m.confidence for m in ms]),
            wiper_speed=_median_ordinal([m.wiper_speed for m in ms]),
            ambient_temp=_mean([m.ambient_temp for m in ms]),
            surface_temp=_mean([m.surface_temp for m in ms]),
            dewpoint_temp=_mean([m.dewpoint_temp for m in ms]),
            humidity=_mean([m.humidity for m in ms]),
            rainfall=_mean([m.rainfall for m in ms]),
            snowfall=_mean([m.snowfall for m in ms]),
            windspeed=_mean([m.windspeed for m in ms]),
        ))
    return out


# --------------------------------------------------------------- windowing


def slot_index(ts, t, T, f_s) -> int:
    """Slot of a timestamp in the window ``(t - T, t]``; slot k covers
    ``(t - T + k T/f_s, t - T + (k+1) T/f_s]``."""
    offset = ts - (t - T)
    if isinstance(offset, int) and isinstance(T, int):
        return -(-offset * f_s // T) - 1
    return math.ceil(offset * f_s / T) - 1


def structure_window(stream: Sequence[Measurement], spec: WindowSpec, t: int,
                     values_of=None) -> StructuredWindow:
    """Down-sample the records in ``(t - T, t]`` into a d x f_s matrix.

    ``values_of(record)`` returns the d-vector for a record; by default
    the record's numeric channels (extra channels left NaN).
    """
    if values_of is None:
        def values_of(m):
            return np.array([m.channel(c) if c in CHANNELS else math.nan for c in spec.channels])
    kept: dict = {}
    for m in stream:
        if t - spec.T < m.timestamp <= t:
            kept[slot_index(m.timestamp, t, spec.T, spec.f_s)] = m  # later overwrites earlier
    if not kept:
        raise EmptyWindowError(f"no measurements in ({t - spec.T}, {t}]")
    values = np.full((spec.d, spec.f_s), np.nan)
    mask = np.ones(spec.f_s, dtype=bool)
    for k, m in kept.items():
        values[:, k] = values_of(m)
        mask[k] = False
    return StructuredWindow(values, mask, t)


# -------------------------------------------------------------- imputation


def inverse_distance_weights(f_s: int, tau: int, observed: Sequence[int]) -> np.ndarray:
    """Weights ``a / |m - tau|`` over the observed columns, normalised to
    sum to one. Returned as a length-f_s vector (zero off ``observed``)."""
    observed = np.asarray(observed, dtype=int)
    if observed.size == 0:
        raise InsufficientDataError("no observed columns to impute from")
    if np.any(observed == tau):
        raise ContractError(f"column {tau} is both missing and observed")
    inv = 1.0 / np.abs(observed - tau).astype(float)
    w = np.zeros(f_s)
    w[observed] = inv / math.fsum(inv)
    return w


def _impute(window: StructuredWindow, neighbor_first: bool) -> StructuredWindow:
    values = window.values.copy()
    missing = window.entry_mask
    d, f_s = values.shape
    for r in range(d):
        miss_r = missing[r]
        if not miss_r.any():
            continue
        obs = np.flatnonzero(~miss_r)
        if obs.size == 0:
            raise InsufficientDataError(f"row {r} has no observed entries")
        for tau in np.flatnonzero(miss_r):
            if (neighbor_first and 0 < tau < f_s - 1
                    and not miss_r[tau - 1] and not miss_r[tau + 1]):
                values[r, tau] = 0.5 * window.values[r, tau - 1] + 0.5 * window.values[r, tau + 1]
            else:
                w = inverse_distance_weights(f_s, tau, obs)
                values[r, tau] = float(w[obs] @ window.values[r, obs])
    return StructuredWindow(values, np.zeros(f_s, dtype=bool), window.t)


def impute_neighbor(window: StructuredWindow) -> StructuredWindow:
    """Fill a gap with the mean of its two neighbours; gaps lacking two
    observed neighbours fall back to inverse-distance weighting."""
    if window.missing_mask.all():
        raise EmptyWindowError("window has no observed column")
    return _impute(window, neighbor_first=True)


def impute_inverse_distance(window: StructuredWindow) -> StructuredWindow:
    """Fill every gap with the inverse-distance weighted mean of the
    observed columns of its row."""
    if window.missing_mask.all():
        raise EmptyWindowError("window has no observed column")
    return _impute(window, neighbor_first=False)


IMPUTERS = {"neighbor": impute_neighbor, "inverse_distance": impute_inverse_distance}


def vectorize(window: StructuredWindow) -> np.ndarray:
    """Column-major flattening: column 0 first, rows in channel order."""
    if window.missing_mask.any() or window.entry_mask.any():
        raise ContractError("window still has missing entries; impute first")
    return window.values.T.reshape(-1).copy()


# -------------------------------------------------------- history weights


def history_weights(deltas_t, deltas_d, spec: WindowSpec) -> np.ndarray:
    """Product of two linear ramps, one over elapsed time and one over
    distance; zero beyond ``history_span`` or ``radius_km``."""
    dt = np.asarray(deltas_t, dtype=float)
    dd = np.asarray(deltas_d, dtype=float)
    if dt.shape != dd.shape:
        raise ContractError("deltas_t and deltas_d must have the same length")
    if np.any(dt < 0) or np.any(dd < 0):
        raise ContractError("deltas must be non-negative")
    wt = np.maximum(0.0, 1.0 - dt / spec.history_span)
    wd = np.maximum(0.0, 1.0 - dd / spec.radius_km)
    return wt * wd


def haversine_km(a, b) -> float:
    lat1, lon1 = map(math.radians, a)
    lat2, lon2 = map(math.radians, b)
    h = (math.sin((lat2 - lat1) / 2) ** 2
         + math.cos(lat1) * math.cos(lat2) * math.sin((lon2 - lon1) / 2) ** 2)
    return 2 * 6371.0088 * math.asin(min(1.0, math.sqrt(h)))


# ---------------------------------------------------------- normalization


def _as_matrix(samples) -> np.ndarray:
    if isinstance(samples, np.ndarray):
        return np.atleast_2d(samples).astype(float)
    return np.array([s.z for s in samples], dtype=float)


def fit_norm(samples) -> NormStats:
    """Per-feature mean and population standard deviation."""
    Z = _as_matrix(samples)
    if Z.shape[0] < 2:
        raise InsufficientDataError("fit_norm needs at least 2 samples")
    mean = Z.mean(axis=0)
    std = np.sqrt(((Z - mean) ** 2).mean(axis=0))
    return NormStats(mean, std)


def normalize(Z: np.ndarray, stats: NormStats) -> np.ndarray:
    """Row-wise z-score; zero-variance features map to 0."""
    Z = np.asarray(Z, dtype=float)
    if Z.shape[-1] != stats.mean.shape[0]:
        raise ContractError(f"dimension {Z.shape[-1]} does not match stats {stats.mean.shape[0]}")
    safe = np.where(stats.std == 0, 1.0, stats.std)
    out = (Z - stats.mean) / safe
    out[..., stats.std == 0] = 0.0
    return out


def apply_norm(sample: FeatureVector, stats: NormStats) -> FeatureVector:
    return replace(sample, z=normalize(sample.z, stats))


# ---------------------------------------------------------- sample building


@dataclass
class BuildReport:
    anchors: int = 0
    built: int = 0
    no_label: int = 0
    empty_window: int = 0
    incomplete_row: int = 0


def _history_row(stream, spec, window_t, ref, slot_ends):
    """Distance/duration-weighted friction mean as of each slot end.
    Distance is taken from ``ref`` and duration from the window end."""
    if not stream:
        return np.full(len(slot_ends), np.nan)
    ts = np.array([m.timestamp for m in stream])
    fr = np.array([m.friction for m in stream])
    dd = np.array([haversine_km(ref.position, m.position) for m in stream])
    dt = np.maximum(window_t - ts, 0)
    w = history_weights(dt, dd, spec)
    row = np.full(len(slot_ends), np.nan)
    for k, end in enumerate(slot_ends):
        sel = (ts <= end) & (ts > window_t - spec.history_span) & np.isfinite(fr)
        wk = w[sel]
        if wk.sum() > 0:
            row[k] = float(wk @ fr[sel] / wk.sum())
    return row


def build_samples(stream: Sequence[Measurement], spec: WindowSpec,
                  policy: LabelPolicy = LabelPolicy(), mode: str = "lookahead",
                  imputation: str = "neighbor", report: BuildReport | None = None
                  ) -> list[FeatureVector]:
    """Labeled feature vectors for one quantized, time-sorted segment stream.

    ``mode='lookahead'`` anchors a window at every record time t and labels
    it with the first record at or after ``t + horizon`` (within
    ``label_tolerance`` seconds). ``mode='shift'`` anchors at every record as the
    label and ends the window at ``t_label - horizon``. The labeled record's
    own friction never enters the features.

    The spatial filter and history weights are centred on the anchor, so
    in lookahead mode the horizon moves only the label.
    """
    if mode not in ("lookahead", "shift"):
        raise ConfigError(f"unknown horizon mode {mode!r}")
    impute = IMPUTERS[imputation]
    report = report if report is not None else BuildReport()
    times = np.array([m.timestamp for m in stream])
    out = []
    width = spec.T / spec.f_s
    for idx, anchor in enumerate(stream):
        report.anchors += 1
        if mode == "lookahead":
            t = anchor.timestamp
            j = int(np.searchsorted(times, t + spec.horizon, side="left"))
            if j >= len(stream) or times[j] >= t + spec.horizon + spec.label_tolerance:
                report.no_label += 1
                continue
            label_m = stream[j]
        else:
            label_m = anchor
            j = idx
            t = anchor.timestamp - spec.horizon
        lo = int(np.searchsorted(times, t - spec.T - spec.history_span, side="right"))
        hi = int(np.searchsorted(times, t, side="right"))
        local = []
        for k in range(lo, hi):
            m = stream[k]
            if haversine_km(anchor.position, m.position) > spec.radius_km:
                continue
            local.append((k, m))
        feats = [m for k, m in local if k != j]
        slot_ends = [t - spec.T + (s + 1) * width for s in range(spec.f_s)]
        hist = _history_row(feats, spec, t, anchor, slot_ends)

        def values_of(m, _label=label_m):
            v = np.array([m.channel(c) if c in CHANNELS else math.nan for c in spec.channels])
            if m.timestamp == _label.timestamp and m.segment_id == _label.segment_id \
                    and "friction" in spec.channels:
                v[spec.channels.index("friction")] = math.nan
            return v

        try:
            window = structure_window([m for _, m in local], spec, t, values_of)
        except EmptyWindowError:
            report.empty_window += 1
            continue
        if HISTORY_CHANNEL in spec.channels:
            r = spec.channels.index(HISTORY_CHANNEL)
            window.values[r] = np.where(window.missing_mask, np.nan, hist)
        try:
            window = impute(window)
        except InsufficientDataError:
            report.incomplete_row += 1
            continue
        out.append(FeatureVector(
            z=vectorize(window), label=label(label_m.friction, policy), t=label_m.timestamp,
            segment_id=label_m.segment_id, target=label_m.friction, horizon=spec.horizon))
        report.built += 1
    return out


def write_feature_csv(samples: Sequence[FeatureVector], path) -> None:
    if not samples:
        raise InsufficientDataError("no samples to write")
    n = samples[0].z.shape[0]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["t", "segment_id", "label"] + [f"z{i}" for i in range(n)])
        for s in samples:
            w.writerow([s.t, s.segment_id, s.label] + [repr(float(v)) for v in s.z])
