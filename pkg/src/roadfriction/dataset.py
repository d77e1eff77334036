"""Measurement records, CSV I/O, friction labeling and the synthetic generator."""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field, fields
from statistics import NormalDist
from typing import Iterable, Sequence

import numpy as np

from .errors import ConfigError, EmptyDatasetError, ParseError

log = logging.getLogger(__name__)

CSV_HEADER = (
    "timestamp", "segment_id", "lat", "lon", "friction", "confidence", "wiper_speed",
    "ambient_temp", "surface_temp", "dewpoint_temp", "humidity", "rainfall", "snowfall",
    "windspeed",
)

# numeric channels a structured window is built from, in row order
CHANNELS = (
    "friction", "wiper_speed", "ambient_temp", "surface_temp", "dewpoint_temp",
    "humidity", "rainfall", "snowfall", "windspeed",
)
COVARIATES = CHANNELS[1:]
ORDINAL = ("confidence", "wiper_speed")

SLIPPERY = 0
HIGH_FRICTION = 1

_NORMAL = NormalDist()


@dataclass(frozen=True)
class Measurement:
    """One time-stamped vehicle/weather observation.

    Covariates may be NaN (``wiper_speed`` may be None) when missing.
    """

    timestamp: int
    segment_id: str
    position: tuple[float, float]
    friction: float
    confidence: int
    wiper_speed: int | None = None
    ambient_temp: float = math.nan
    surface_temp: float = math.nan
    dewpoint_temp: float = math.nan
    humidity: float = math.nan
    rainfall: float = math.nan
    snowfall: float = math.nan
    windspeed: float = math.nan

    def __post_init__(self):
        if self.timestamp <= 0:
            raise ValueError(f"timestamp must be positive, got {self.timestamp}")
        if not 0.0 <= self.friction <= 1.0:
            raise ValueError(f"friction {self.friction} outside [0, 1]")
        if self.confidence < 0:
            raise ValueError(f"confidence {self.confidence} is negative")
        if self.wiper_speed is not None and self.wiper_speed < 0:
            raise ValueError(f"wiper_speed {self.wiper_speed} is negative")
        if not math.isnan(self.humidity) and not 0.0 <= self.humidity <= 1.0:
            raise ValueError(f"humidity {self.humidity} outside [0, 1]")
        for name in ("rainfall", "snowfall", "windspeed"):
            v = getattr(self, name)
            if not math.isnan(v) and v < 0:
                raise ValueError(f"{name} {v} is negative")

    def channel(self, name: str) -> float:
        """Numeric value of a window channel, NaN when missing."""
        v = getattr(self, name)
        return math.nan if v is None else float(v)

    def channels(self) -> np.ndarray:
        return np.array([self.channel(c) for c in CHANNELS])

    def __eq__(self, other):
        # NaN-aware field equality so that missing values compare equal
        if not isinstance(other, Measurement):
            return NotImplemented
        for f in fields(self):
            a, b = getattr(self, f.name), getattr(other, f.name)
            if isinstance(a, float) and isinstance(b, float) and math.isnan(a) and math.isnan(b):
                continue
            if a != b:
                return False
        return True

    __hash__ = None


@dataclass(frozen=True)
class LabelPolicy:
    friction_threshold: float = 0.5
    min_confidence: int = 1

    def __post_init__(self):
        if not 0.0 < self.friction_threshold < 1.0:
            raise ConfigError(f"friction_threshold must lie in (0, 1), got {self.friction_threshold}")


def label(friction: float, policy: LabelPolicy = LabelPolicy()) -> int:
    """0 (slippery) below the threshold, 1 (high friction) at or above it."""
    return SLIPPERY if friction < policy.friction_threshold else HIGH_FRICTION


# ---------------------------------------------------------------- CSV I/O


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return "" if math.isnan(v) else repr(v)
    return str(v)


def measurement_row(m: Measurement) -> list[str]:
    return [
        str(m.timestamp), m.segment_id, _fmt(m.position[0]), _fmt(m.position[1]),
        _fmt(m.friction), str(m.confidence), _fmt(m.wiper_speed), _fmt(m.ambient_temp),
        _fmt(m.surface_temp), _fmt(m.dewpoint_temp), _fmt(m.humidity), _fmt(m.rainfall),
        _fmt(m.snowfall), _fmt(m.windspeed),
    ]


def save_measurements(records: Iterable[Measurement], path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CSV_HEADER)
        for m in records:
            w.writerow(measurement_row(m))


def _parse_float(text: str, name: str, required: bool) -> float:
    text = text.strip()
    if text == "":
        if required:
            raise ValueError(f"missing required field {name}")
        return math.nan
    return float(text)


def _parse_int(text: str, name: str, required: bool) -> int | None:
    text = text.strip()
    if text == "":
        if required:
            raise ValueError(f"missing required field {name}")
        return None
    v = float(text)
    if v != int(v):
        raise ValueError(f"{name} must be an integer, got {text}")
    return int(v)


def parse_row(row: Sequence[str]) -> Measurement:
    if len(row) != len(CSV_HEADER):
        raise ValueError(f"expected {len(CSV_HEADER)} fields, got {len(row)}")
    (ts, seg, lat, lon, fr, conf, wiper, amb, surf, dew, hum, rain, snow, wind) = row
    return Measurement(
        timestamp=_parse_int(ts, "timestamp", True),
        segment_id=seg,
        position=(_parse_float(lat, "lat", True), _parse_float(lon, "lon", True)),
        friction=_parse_float(fr, "friction", True),
        confidence=_parse_int(conf, "confidence", True),
        wiper_speed=_parse_int(wiper, "wiper_speed", False),
        ambient_temp=_parse_float(amb, "ambient_temp", False),
        surface_temp=_parse_float(surf, "surface_temp", False),
        dewpoint_temp=_parse_float(dew, "dewpoint_temp", False),
        humidity=_parse_float(hum, "humidity", False),
        rainfall=_parse_float(rain, "rainfall", False),
        snowfall=_parse_float(snow, "snowfall", False),
        windspeed=_parse_float(wind, "windspeed", False),
    )


def read_measurements(path) -> list[Measurement]:
    """Parse every row of a measurement CSV, without filtering or sorting."""
    out = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or tuple(h.strip() for h in header) != CSV_HEADER:
            raise ParseError(f"bad header {header!r}", line=1)
        for row in reader:
            if not row:
                continue
            try:
                out.append(parse_row(row))
            except ValueError as exc:
                raise ParseError(str(exc), line=reader.line_num) from exc
    return out


def load_measurements(path, policy: LabelPolicy = LabelPolicy()) -> list[Measurement]:
    """Load a measurement CSV, drop low-confidence rows, sort by time."""
    records = [m for m in read_measurements(path) if m.confidence >= policy.min_confidence]
    if not records:
        raise EmptyDatasetError(f"{path}: no measurements with confidence >= {policy.min_confidence}")
    records.sort(key=lambda m: m.timestamp)
    return records


# ---------------------------------------------------------- synthetic data

# gives a concurrent-covariate Bayes error of about 0.15 at slippery_fraction 0.4
DEFAULT_CORRELATIONS = {
    "humidity": -0.68,
    "rainfall": -0.5,
    "snowfall": -0.45,
    "surface_temp": 0.64,
    "ambient_temp": 0.5,
    "dewpoint_temp": -0.35,
    "wiper_speed": -0.45,
    "windspeed": -0.15,
}

# standard-normal latent -> physical value
_TRANSFORMS = {
    "wiper_speed": lambda x: np.clip(np.floor(x + 1.5), 0, 3),
    "ambient_temp": lambda x: 2.0 + 6.0 * x,
    "surface_temp": lambda x: 1.0 + 7.0 * x,
    "dewpoint_temp": lambda x: -1.0 + 5.0 * x,
    "humidity": lambda x: np.clip(0.8 + 0.12 * x, 0.0, 1.0),
    "rainfall": lambda x: np.maximum(0.0, 0.8 * (x + 0.3)),
    "snowfall": lambda x: np.maximum(0.0, 0.6 * (x + 0.1)),
    "windspeed": lambda x: np.maximum(0.0, 4.0 + 2.0 * x),
}
_FRICTION_SLOPE = 1.5
_trapezoid = getattr(np, "trapezoid", None) or np.trapz  # renamed in numpy 2


@dataclass(frozen=True)
class SynthConfig:
    """Generator settings. Same config gives a bit-identical dataset.

    ``feature_correlations`` are target Pearson correlations between each
    covariate and friction; covariates not listed are uncorrelated with
    friction. ``noise_scale`` is white observation noise (in latent
    standard deviations) added to each covariate.
    """

    n_samples: int = 5000
    seed: int = 0
    slippery_fraction: float = 0.4
    feature_correlations: dict = field(default_factory=lambda: dict(DEFAULT_CORRELATIONS))
    noise_scale: float = 0.1
    friction_threshold: float = 0.5
    segment_id: str = "seg1"
    center: tuple[float, float] = (57.7089, 11.9746)
    spread_km: float = 3.0
    start_time: int = 1446336000
    mean_gap: float = 600.0
    time_constant: float = 1800.0
    low_confidence_fraction: float = 0.05

    def __post_init__(self):
        if self.n_samples < 1:
            raise ConfigError("n_samples must be >= 1")
        if not 0.0 < self.slippery_fraction < 1.0:
            raise ConfigError("slippery_fraction must lie in (0, 1)")
        if self.noise_scale < 0:
            raise ConfigError("noise_scale must be >= 0")
        if not 0.0 < self.friction_threshold < 1.0:
            raise ConfigError("friction_threshold must lie in (0, 1)")
        for name, r in self.feature_correlations.items():
            if name not in _TRANSFORMS:
                raise ConfigError(f"unknown feature {name!r} in feature_correlations")
            if not -1.0 <= r <= 1.0:
                raise ConfigError(f"correlation for {name} outside [-1, 1]: {r}")
        if self.mean_gap <= 0 or self.time_constant <= 0:
            raise ConfigError("mean_gap and time_constant must be positive")


@dataclass
class SynthOutput:
    records: list[Measurement]
    clipped: dict
    loadings: dict
    bayes_error: float


def _friction_offset(cfg: SynthConfig) -> float:
    thr = cfg.friction_threshold
    return math.log(thr / (1.0 - thr)) - _FRICTION_SLOPE * _NORMAL.inv_cdf(cfg.slippery_fraction)


def _friction_of(z, offset):
    return 1.0 / (1.0 + np.exp(-(_FRICTION_SLOPE * z + offset)))


_GH_X, _GH_W = np.polynomial.hermite_e.hermegauss(80)
_GH_W = _GH_W / _GH_W.sum()


def transformed_correlation(rho: float, feature: str, offset: float) -> float:
    """Pearson correlation between observed friction and the observed
    feature when their latent Gaussians have correlation ``rho``."""
    z1 = _GH_X[:, None]
    z2 = _GH_X[None, :]
    w = _GH_W[:, None] * _GH_W[None, :]
    h = _friction_of(z1, offset) * np.ones_like(z2)
    g = _TRANSFORMS[feature](rho * z1 + math.sqrt(max(0.0, 1.0 - rho * rho)) * z2)
    mh, mg = (w * h).sum(), (w * g).sum()
    cov = (w * (h - mh) * (g - mg)).sum()
    vh, vg = (w * (h - mh) ** 2).sum(), (w * (g - mg) ** 2).sum()
    if vh <= 0 or vg <= 0:
        return 0.0
    return float(cov / math.sqrt(vh * vg))


def latent_correlation(target: float, feature: str, offset: float) -> float:
    """Invert ``transformed_correlation`` by bisection."""
    if target == 0.0:
        return 0.0
    hi_val = transformed_correlation(math.copysign(1.0, target), feature, offset)
    if abs(target) > abs(hi_val):
        raise ConfigError(
            f"correlation {target} for {feature} unreachable (max |r| = {abs(hi_val):.3f})")
    lo, hi = 0.0, 1.0
    for _ in range(60):
        mid = 0.5 * (lo + hi)
        if abs(transformed_correlation(math.copysign(mid, target), feature, offset)) < abs(target):
            lo = mid
        else:
            hi = mid
    return math.copysign(0.5 * (lo + hi), target)


def factor_loadings(cfg: SynthConfig) -> dict:
    """Loading of each covariate's latent on the friction latent.

    The latent model is one-factor: covariate ``j`` is
    ``(l_j f + sqrt(1 - l_j^2) e_j + s n_j) / sqrt(1 + s^2)``, which is
    positive semidefinite by construction; only ``|l_j| > 1`` is infeasible.
    """
    offset = _friction_offset(cfg)
    scale = math.sqrt(1.0 + cfg.noise_scale ** 2)
    out = {}
    for name in COVARIATES:
        r = cfg.feature_correlations.get(name, 0.0)
        lam = latent_correlation(r, name, offset) * scale
        if abs(lam) > 1.0:
            raise ConfigError(
                f"correlation {r} for {name} infeasible with noise_scale {cfg.noise_scale}")
        out[name] = lam
    return out


def latent_bayes_error(cfg: SynthConfig, loadings: dict | None = None) -> float:
    """Error of the optimal classifier that sees the concurrent covariate
    latents, computed by quadrature over the Gaussian posterior mean."""
    if loadings is None:
        loadings = factor_loadings(cfg)
    lam = np.array([loadings[c] for c in COVARIATES])
    s2 = cfg.noise_scale ** 2
    cov_xx = (np.outer(lam, lam) + np.diag(1.0 - lam ** 2 + s2)) / (1.0 + s2)
    cov_fx = lam / math.sqrt(1.0 + s2)
    r2 = float(cov_fx @ np.linalg.solve(cov_xx, cov_fx))
    c = _NORMAL.inv_cdf(cfg.slippery_fraction)
    if r2 <= 0.0:
        return min(cfg.slippery_fraction, 1.0 - cfg.slippery_fraction)
    s = math.sqrt(max(1.0 - r2, 0.0))
    if s == 0.0:
        return 0.0
    r = math.sqrt(r2)
    mu = np.linspace(-10.0 * r, 10.0 * r, 40001)
    dens = np.exp(-0.5 * (mu / r) ** 2) / (r * math.sqrt(2.0 * math.pi))
    tail = 0.5 * np.vectorize(math.erfc)(np.abs(mu - c) / (s * math.sqrt(2.0)))
    return float(_trapezoid(dens * tail, mu))


def simulate_latents(cfg: SynthConfig, loadings: dict, rng: np.random.Generator):
    """Timestamps plus latent friction and observed covariate latents.

    Each latent is a stationary AR(1) process with correlation
    ``exp(-gap / time_constant)`` between consecutive records.
    """
    n = cfg.n_samples
    m = len(COVARIATES)
    gaps = 1 + np.floor(rng.exponential(cfg.mean_gap, size=n)).astype(np.int64)
    gaps[0] = 0
    times = cfg.start_time + np.cumsum(gaps)
    a = np.exp(-gaps / cfg.time_constant)
    innov = rng.standard_normal((n, m + 1))
    state = np.empty((n, m + 1))
    state[0] = innov[0]
    for k in range(1, n):
        state[k] = a[k] * state[k - 1] + math.sqrt(1.0 - a[k] * a[k]) * innov[k]
    f = state[:, 0]
    lam = np.array([loadings[c] for c in COVARIATES])
    s = cfg.noise_scale
    noise = rng.standard_normal((n, m))
    x = (lam * f[:, None] + np.sqrt(1.0 - lam ** 2) * state[:, 1:] + s * noise) / math.sqrt(1.0 + s * s)
    return times, f, x


def generate(cfg: SynthConfig) -> SynthOutput:
    """Synthesize a segment's measurement stream plus generator diagnostics."""
    loadings = factor_loadings(cfg)
    rng = np.random.default_rng(cfg.seed)
    times, f, x = simulate_latents(cfg, loadings, rng)
    n = cfg.n_samples
    offset = _friction_offset(cfg)
    friction_raw = np.round(_friction_of(f, offset), 4)
    clipped = {"friction": int(np.sum((friction_raw < 0) | (friction_raw > 1)))}
    friction = np.clip(friction_raw, 0.0, 1.0)
    phys = {}
    for j, name in enumerate(COVARIATES):
        raw = x[:, j]
        v = _TRANSFORMS[name](raw)
        if name == "humidity":
            clipped[name] = int(np.sum((0.8 + 0.12 * raw < 0) | (0.8 + 0.12 * raw > 1)))
        phys[name] = np.round(v, 4)
    if clipped["friction"] or clipped.get("humidity"):
        log.info("synthesize(%s): clipped %s", cfg.segment_id, clipped)

    # positions scattered around the segment centre
    bearing = rng.uniform(0.0, 2.0 * math.pi, size=n)
    dist = cfg.spread_km * np.sqrt(rng.uniform(0.0, 1.0, size=n))
    dlat = dist * np.cos(bearing) / 111.32
    dlon = dist * np.sin(bearing) / (111.32 * math.cos(math.radians(cfg.center[0])))
    lat = np.round(cfg.center[0] + dlat, 6)
    lon = np.round(cfg.center[1] + dlon, 6)
    conf = np.where(rng.uniform(size=n) < cfg.low_confidence_fraction, 0,
                    rng.integers(1, 4, size=n))

    records = [
        Measurement(
            timestamp=int(times[k]),
            segment_id=cfg.segment_id,
            position=(float(lat[k]), float(lon[k])),
            friction=float(friction[k]),
            confidence=int(conf[k]),
            wiper_speed=int(phys["wiper_speed"][k]),
            ambient_temp=float(phys["ambient_temp"][k]),
            surface_temp=float(phys["surface_temp"][k]),
            dewpoint_temp=float(phys["dewpoint_temp"][k]),
            humidity=float(phys["humidity"][k]),
            rainfall=float(phys["rainfall"][k]),
            snowfall=float(phys["snowfall"][k]),
            windspeed=float(phys["windspeed"][k]),
        )
        for k in range(n)
    ]
    return SynthOutput(records, clipped, loadings, latent_bayes_error(cfg, loadings))


def synthesize(config: SynthConfig) -> list[Measurement]:
    return generate(config).records
