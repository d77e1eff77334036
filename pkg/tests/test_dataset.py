import math

import numpy as np
import pytest

from roadfriction import dataset as ds
from roadfriction.errors import ConfigError, EmptyDatasetError, ParseError

from oracles import monte_carlo_bayes_error


def _m(ts=1000, friction=0.6, confidence=2, **kw):
    return ds.Measurement(ts, "s", (57.7, 11.9), friction, confidence, **kw)


def test_label_threshold_tie_is_high_friction():
    assert ds.label(0.5) == ds.HIGH_FRICTION
    assert ds.label(0.4999) == ds.SLIPPERY
    assert ds.label(0.0) == ds.SLIPPERY
    assert ds.label(1.0) == ds.HIGH_FRICTION


def test_label_policy_rejects_threshold_outside_unit_interval():
    with pytest.raises(ConfigError):
        ds.LabelPolicy(friction_threshold=1.0)


@pytest.mark.parametrize("kw", [
    {"friction": 1.2}, {"humidity": 1.3}, {"rainfall": -0.1}, {"ts": 0}, {"confidence": -1},
    {"wiper_speed": -2},
])
def test_measurement_invariants(kw):
    with pytest.raises(ValueError):
        _m(**kw)


def test_csv_round_trip_keeps_missing_values(tmp_path):
    recs = [_m(1000, 0.3, 1, wiper_speed=2, humidity=0.9),
            _m(1200, 0.7, 3, ambient_temp=-3.25)]
    path = tmp_path / "m.csv"
    ds.save_measurements(recs, path)
    back = ds.read_measurements(path)
    assert back == recs
    assert back[0].wiper_speed == 2 and math.isnan(back[0].ambient_temp)
    assert back[1].wiper_speed is None


def test_load_filters_confidence_and_sorts(tmp_path):
    recs = [_m(3000, confidence=2), _m(1000, confidence=0), _m(2000, confidence=1)]
    path = tmp_path / "m.csv"
    ds.save_measurements(recs, path)
    out = ds.load_measurements(path, ds.LabelPolicy(min_confidence=1))
    assert [m.timestamp for m in out] == [2000, 3000]


def test_load_all_filtered_is_an_explicit_error(tmp_path):
    path = tmp_path / "m.csv"
    ds.save_measurements([_m(confidence=0)], path)
    with pytest.raises(EmptyDatasetError):
        ds.load_measurements(path)


def test_parse_error_names_the_line(tmp_path):
    path = tmp_path / "m.csv"
    ds.save_measurements([_m(1000), _m(2000)], path)
    lines = path.read_text().splitlines()
    fields = lines[2].split(",")
    fields[10] = "1.3"  # humidity
    lines[2] = ",".join(fields)
    path.write_text("\n".join(lines) + "\n")
    with pytest.raises(ParseError) as exc:
        ds.read_measurements(path)
    assert exc.value.line == 3
    assert "line 3" in str(exc.value)


def test_bad_header_is_rejected(tmp_path):
    path = tmp_path / "m.csv"
    path.write_text("a,b,c\n")
    with pytest.raises(ParseError):
        ds.read_measurements(path)


def test_synthesize_is_deterministic():
    cfg = ds.SynthConfig(n_samples=300, seed=5)
    assert ds.synthesize(cfg) == ds.synthesize(cfg)


def test_synthesize_contract():
    cfg = ds.SynthConfig(n_samples=5000, seed=3)
    recs = ds.synthesize(cfg)
    assert len(recs) == 5000
    ts = np.array([m.timestamp for m in recs])
    assert np.all(np.diff(ts) > 0)
    fr = np.array([m.friction for m in recs])
    slippery = np.mean(fr < cfg.friction_threshold)
    assert abs(slippery - cfg.slippery_fraction) <= 0.05
    for name, target in cfg.feature_correlations.items():
        x = np.array([m.channel(name) for m in recs])
        r = np.corrcoef(fr, x)[0, 1]
        assert abs(r - target) <= 0.1, (name, r, target)


def test_synthesize_targeted_humidity_correlation():
    cfg = ds.SynthConfig(n_samples=10000, seed=11, feature_correlations={"humidity": -0.6})
    recs = ds.synthesize(cfg)
    fr = np.array([m.friction for m in recs])
    hum = np.array([m.humidity for m in recs])
    r = np.corrcoef(fr, hum)[0, 1]
    assert -0.7 <= r <= -0.5


def test_zero_correlation_gives_independent_covariates():
    cfg = ds.SynthConfig(n_samples=5000, seed=2, feature_correlations={}, noise_scale=0.0)
    recs = ds.synthesize(cfg)
    fr = np.array([m.friction for m in recs])
    for name in ds.COVARIATES:
        x = np.array([m.channel(name) for m in recs])
        if np.std(x) == 0:
            continue
        assert abs(np.corrcoef(fr, x)[0, 1]) < 0.05, name


def test_unreachable_correlation_is_a_config_error():
    with pytest.raises(ConfigError):
        ds.factor_loadings(ds.SynthConfig(feature_correlations={"humidity": -0.999}))


def test_unknown_feature_is_a_config_error():
    with pytest.raises(ConfigError):
        ds.SynthConfig(feature_correlations={"visibility": 0.3})


def test_bayes_error_of_uninformative_covariates_is_the_minority_share():
    cfg = ds.SynthConfig(feature_correlations={}, slippery_fraction=0.3)
    assert ds.latent_bayes_error(cfg) == pytest.approx(0.3)


def test_default_bayes_error_near_design_value():
    assert ds.latent_bayes_error(ds.SynthConfig()) == pytest.approx(0.15, abs=0.01)


def test_bayes_error_matches_monte_carlo_oracle():
    cfg = ds.SynthConfig()
    assert ds.latent_bayes_error(cfg) == pytest.approx(monte_carlo_bayes_error(cfg), abs=0.01)
