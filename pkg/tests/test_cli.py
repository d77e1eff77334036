import csv
import subprocess
import sys

import numpy as np
import pytest

from roadfriction import cli
from roadfriction import dataset as ds
from roadfriction.errors import ConfigError

from oracles import monte_carlo_bayes_error

SMALL = ["segments=1", "n_samples=600", "log_level=WARNING", "cv.repeats=1", "cv.k=3",
         "classifiers=LR", "horizons=0,30", "sne.n_iter=30", "embed.max_points=60",
         "sne.perplexity=10"]


def _run(cmd, out, *extra):
    args = [cmd]
    for kv in SMALL + [f"out_dir={out}"] + list(extra):
        args += ["--set", kv]
    return cli.main(args)


def _rows(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


# config handling


def test_parse_config_text():
    raw = cli.parse_config_text("# comment\nseed = 4\n\ncv.k=3\n")
    assert raw == {"seed": "4", "cv.k": "3"}
    with pytest.raises(ConfigError):
        cli.parse_config_text("seed 4")


def test_every_key_has_a_valid_default():
    cfg = cli.resolve({})
    assert cfg["horizons"] == (0, 30, 60, 90, 120)
    assert cfg["pca_keep"] == 14 and cfg["cv.k"] == 5
    assert all(spec.doc for spec in cli.KEYS.values())


@pytest.mark.parametrize("raw", [
    {"no_such_key": "1"}, {"seed": "abc"}, {"classifiers": "LR,KNN"}, {"cv.k": "1"},
    {"horizon_mode": "backwards"}, {"ann_pca": "maybe"}, {"horizons": ""},
])
def test_bad_config_is_rejected(raw):
    with pytest.raises(ConfigError):
        cli.resolve(raw)


def test_overrides_beat_the_file(tmp_path):
    path = tmp_path / "c.cfg"
    path.write_text("seed=1\ncv.k=4\n")
    cfg = cli.load_config(str(path), ["seed=9"])
    assert cfg["seed"] == 9 and cfg["cv.k"] == 4


def test_exit_code_for_config_errors(tmp_path, capsys):
    assert cli.main(["synth", "--set", "bogus=1"]) == cli.EXIT_CONFIG
    assert cli.main(["synth", "--config", str(tmp_path / "missing.cfg")]) == cli.EXIT_CONFIG
    assert cli.main(["synth", "--set", "novalue"]) == cli.EXIT_CONFIG
    assert "config error" in capsys.readouterr().err


def test_keys_command(capsys):
    assert cli.main(["keys"]) == 0
    assert "cv.repeats=5" in capsys.readouterr().out


# synth


def test_synth_writes_records_and_manifest(tmp_path):
    assert _run("synth", tmp_path) == 0
    rows = _rows(tmp_path / "measurements.csv")
    assert len(rows) == 600 + 1
    manifest = (tmp_path / "manifest.cfg").read_text()
    assert "command=synth" in manifest and "# bayes_error.seg1=" in manifest


def test_synth_is_deterministic(tmp_path):
    _run("synth", tmp_path / "a")
    _run("synth", tmp_path / "b")
    assert (tmp_path / "a/measurements.csv").read_bytes() == (tmp_path / "b/measurements.csv").read_bytes()


def test_manifest_bayes_error_matches_monte_carlo(tmp_path):
    _run("synth", tmp_path)
    lines = (tmp_path / "manifest.cfg").read_text().splitlines()
    raw = dict(l[2:].split("=", 1) for l in lines if l.startswith("# ") and "=" in l)
    cfg = cli.load_config(None, SMALL)
    sc = cli.synth_configs(cfg)[0]
    assert abs(float(raw["bayes_error.seg1"]) - monte_carlo_bayes_error(sc)) <= 0.03


# embed


def test_embed_outputs(tmp_path):
    assert _run("embed", tmp_path) == 0
    corr = _rows(tmp_path / "correlation.csv")
    names = corr[0][1:]
    R = np.array([[float(v) for v in r[1:]] for r in corr[1:]])
    assert np.all(np.diag(R) == 1.0)
    sign = np.sign(ds.DEFAULT_CORRELATIONS["humidity"])
    assert np.sign(R[names.index("friction"), names.index("humidity")]) == sign
    pca_rows = _rows(tmp_path / "pca_2d.csv")
    assert pca_rows[0] == ["point_id", "label", "pc0", "pc1"]
    assert all(len(r) == 4 for r in pca_rows)
    var = _rows(tmp_path / "pca_variance.csv")
    assert var[0] == ["n", "eigenvalue", "T_n", "fraction"]
    assert float(var[-1][3]) == pytest.approx(1.0)
    sne_rows = _rows(tmp_path / "sne.csv")
    assert sne_rows[0] == ["point_id", "label", "y0", "y1"] and len(sne_rows) == 61


# experiment


def test_experiment_table_layout(tmp_path):
    assert _run("experiment", tmp_path) == 0
    rows = _rows(tmp_path / "table_seg1.csv")
    assert rows[0] == list(cli.ev.REPORT_HEADER)
    assert [(r[0], r[1]) for r in rows[1:]] == [("LR", "0"), ("LR", "30")]
    assert all(0 <= float(v) <= 1 for r in rows[1:] for v in r[2:5])
    folds = _rows(tmp_path / "folds_seg1.csv")
    assert len(folds) == 1 + 2 * 3
    assert "Road segment seg1" in (tmp_path / "table_seg1.txt").read_text()


def test_failed_cell_gives_exit_one(tmp_path):
    # a horizon far past the end of the data leaves no labeled windows
    assert _run("experiment", tmp_path, "horizons=0,100000") == cli.EXIT_FAILED_CELL
    rows = _rows(tmp_path / "table_seg1.csv")
    assert rows[2][2:5] == ["failed"] * 3
    assert rows[1][2] != "failed"


def test_manifest_rerun_is_byte_identical(tmp_path):
    first = tmp_path / "first"
    assert _run("experiment", first) == 0
    second = tmp_path / "second"
    manifest = first / "manifest.cfg"
    assert cli.main(["experiment", "--config", str(manifest), "--set", f"out_dir={second}"]) == 0
    for name in ("table_seg1.csv", "folds_seg1.csv", "table_seg1.txt"):
        assert (first / name).read_bytes() == (second / name).read_bytes()
    strip = [l for l in manifest.read_text().splitlines() if not l.startswith("out_dir=")]
    again = [l for l in (second / "manifest.cfg").read_text().splitlines() if not l.startswith("out_dir=")]
    assert strip == again


# sweep


def test_interval_sweep_table(tmp_path):
    assert _run("sweep", tmp_path, "sweep.classifiers=LR") == 0
    rows = _rows(tmp_path / "sweep_interval.csv")
    assert rows[0][0] == "interval_min" and rows[0][1:] == list(cli.ev.REPORT_HEADER)
    assert [r[0] for r in rows[1:]] == ["2", "5", "10", "30", "60"]
    assert "# winner.LR=" in (tmp_path / "manifest.cfg").read_text()


def test_hidden_layer_sweep_rejects_non_ann(tmp_path):
    code = _run("sweep", tmp_path, "sweep.param=hidden_layers", "sweep.values=1,2",
                "sweep.classifiers=LR")
    assert code == cli.EXIT_CONFIG


def test_console_script_runs(tmp_path):
    out = subprocess.run([sys.executable, "-m", "roadfriction.cli", "synth", "--set",
                          f"out_dir={tmp_path}", "--set", "n_samples=30", "--set", "log_level=ERROR"],
                         capture_output=True, text=True)
    assert out.returncode == 0, out.stderr
    assert (tmp_path / "measurements.csv").exists()
