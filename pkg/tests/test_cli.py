import csv
import subprocess
import sys
from collections import defaultdict

import numpy as np
import pytest

from herdtrack.cli import main
from herdtrack.config import load_config, load_shipped, parse_mode
from herdtrack.core import Label
from herdtrack.io import (
    FormatError,
    read_estimates,
    read_measurements,
    read_truth,
    write_estimates,
    write_measurements,
)
from herdtrack.models import ConfigError, MeasurementFrame

TINY = """\
horizon: 6
seed: 3
region: [[-2000, 2000], [-2000, 2000]]
sensors:
  count: 2
  clutter_rate: 3.0
birth:
  iterations: 20
  prior_cov: [1.0e6, 2500.0, 1.0e6, 2500.0]
filter:
  update_iterations: 20
campaign:
  runs: 2
  modes:
    - {name: a, filter: glmb, birth: herded, update: herded}
    - {name: b, filter: lmb, birth: herded, update: stochastic}
targets:
  - {birth: 0, death: 6, state: [100.0, 5.0, -50.0, 2.0]}
  - {birth: 2, death: 5, state: [-300.0, 0.0, 400.0, -4.0]}
"""


@pytest.fixture
def tiny(tmp_path):
    p = tmp_path / "tiny.yaml"
    p.write_text(TINY)
    return p


def run(*argv):
    return main([str(a) for a in argv])


def read_bytes(d, *names):
    return [(d / n).read_bytes() for n in names]


def test_simulate_deterministic_default(tmp_path):
    assert run("simulate", "--config", "default", "--seed", 7, "--out", tmp_path / "a") == 0
    assert run("simulate", "--config", "default", "--seed", 7, "--out", tmp_path / "b") == 0
    names = ("truth.txt", "measurements.txt")
    assert read_bytes(tmp_path / "a", *names) == read_bytes(tmp_path / "b", *names)


def test_simulate_deterministic_across_processes(tmp_path, tiny):
    for d in ("a", "b"):
        subprocess.run([sys.executable, "-m", "herdtrack.cli", "simulate", "--config", str(tiny),
                        "--out", str(tmp_path / d)], check=True)
    names = ("truth.txt", "measurements.txt")
    assert read_bytes(tmp_path / "a", *names) == read_bytes(tmp_path / "b", *names)


def test_simulate_horizon_zero(tmp_path, tiny):
    cfg = tmp_path / "zero.yaml"
    cfg.write_text(TINY.replace("horizon: 6", "horizon: 0"))
    assert run("simulate", "--config", cfg, "--out", tmp_path / "o") == 0
    assert read_measurements(tmp_path / "o" / "measurements.txt") == []
    assert read_truth(tmp_path / "o" / "truth.txt") == []


def test_missing_sensors(tmp_path, capsys):
    cfg = tmp_path / "bad.yaml"
    cfg.write_text("horizon: 3\n")
    assert run("simulate", "--config", cfg, "--out", tmp_path / "o") == 2
    assert "sensors: required" in capsys.readouterr().err


def test_unknown_key_is_line_referenced(tmp_path, capsys):
    cfg = tmp_path / "bad.yaml"
    cfg.write_text(TINY.replace("  clutter_rate: 3.0", "  clutter_rate: 3.0\n  cluter: 1"))
    assert run("simulate", "--config", cfg, "--out", tmp_path / "o") == 2
    err = capsys.readouterr().err
    assert "line 7" in err and "cluter" in err


def test_missing_config_file(tmp_path):
    assert run("simulate", "--config", tmp_path / "nope.yaml", "--out", tmp_path) == 2


def test_track_deterministic(tmp_path, tiny):
    run("simulate", "--config", tiny, "--out", tmp_path / "sim")
    meas, truth = tmp_path / "sim" / "measurements.txt", tmp_path / "sim" / "truth.txt"
    outs = []
    for i, (mode, seed) in enumerate([("glmb:herded/herded", 1), ("glmb:herded/herded", 2),
                                      ("lmb:herded/stochastic", 5), ("lmb:herded/stochastic", 5)]):
        d = tmp_path / f"t{i}"
        assert run("track", "--config", tiny, "--measurements", meas, "--truth", truth, "--out", d,
                   "--mode", mode, "--seed", seed) == 0
        outs.append((d / "estimates.txt").read_bytes())
    # herded/herded ignores the seed; a fixed seed reproduces the stochastic update
    assert outs[0] == outs[1]
    assert outs[2] == outs[3]
    rows = list(csv.DictReader(open(tmp_path / "t0" / "records.csv")))
    assert len(rows) == 6


def test_track_sensor_mismatch(tmp_path, tiny):
    frames = [MeasurementFrame(0, (np.zeros((0, 2)),))]
    write_measurements(tmp_path / "m.txt", frames, 1)
    assert run("track", "--config", tiny, "--measurements", tmp_path / "m.txt", "--out", tmp_path / "o") == 2


def test_campaign_rows_and_means(tmp_path, tiny):
    out = tmp_path / "camp"
    assert run("campaign", "--config", tiny, "--out", out) == 0
    rows = list(csv.DictReader(open(out / "campaign.csv")))
    assert len(rows) == 2 * 2 * 6
    assert list(rows[0]) == ["mode", "run", "step", "ospa2", "truth_card", "est_card"]
    per = defaultdict(list)
    for r in rows:
        per[(r["mode"], int(r["step"]))].append(float(r["ospa2"]))
    for r in csv.DictReader(open(out / "summary.csv")):
        vals = per[(r["mode"], int(r["step"]))]
        assert float(r["mean_ospa2"]) == pytest.approx(sum(vals) / len(vals), abs=1e-12)
    assert (out / "ospa2.svg").read_text().startswith("<svg")


def test_campaign_identical_modes(tmp_path, tiny):
    out = tmp_path / "camp"
    assert run("campaign", "--config", tiny, "--out", out, "--runs", 1, "--no-svg",
               "--mode", "glmb:herded/herded", "--mode", "glmb:herded/herded") == 0
    rows = list(csv.DictReader(open(out / "campaign.csv")))
    assert [r["ospa2"] for r in rows[:6]] == [r["ospa2"] for r in rows[6:]]
    assert not (out / "ospa2.svg").exists()


def test_campaign_workers_do_not_change_output(tmp_path, tiny):
    run("campaign", "--config", tiny, "--out", tmp_path / "w1", "--no-svg")
    run("campaign", "--config", tiny, "--out", tmp_path / "w2", "--no-svg", "--workers", 2)
    assert read_bytes(tmp_path / "w1", "campaign.csv") == read_bytes(tmp_path / "w2", "campaign.csv")


def test_metrics_command(tmp_path, tiny):
    run("simulate", "--config", tiny, "--out", tmp_path / "sim")
    truth = read_truth(tmp_path / "sim" / "truth.txt")
    est = [[(Label(0, i), x) for i, x in sorted(step.items())] for step in truth]
    write_estimates(tmp_path / "est.txt", est)
    assert run("metrics", "--config", tiny, "--truth", tmp_path / "sim" / "truth.txt",
               "--estimates", tmp_path / "est.txt", "--out", tmp_path / "m.csv") == 0
    rows = list(csv.DictReader(open(tmp_path / "m.csv")))
    assert len(rows) == 6 and all(float(r["ospa2"]) == 0.0 for r in rows)


def test_measurement_roundtrip(tmp_path):
    frames = [MeasurementFrame(0, ([[1.25, -3.5]], np.zeros((0, 2)))),
              MeasurementFrame(1, ([[0.1, 0.2], [3.0, 4.0]], [[1e-7, 123456789.0]]))]
    write_measurements(tmp_path / "m.txt", frames, 2)
    back = read_measurements(tmp_path / "m.txt")
    assert len(back) == 2
    for a, b in zip(frames, back):
        assert all(np.array_equal(x, y) for x, y in zip(a.per_sensor, b.per_sensor))


def test_estimates_roundtrip(tmp_path):
    est = [[(Label(1, (0, 2)), np.array([1.0, 2.0, 3.0, 4.0]))], []]
    write_estimates(tmp_path / "e.txt", est)
    back = read_estimates(tmp_path / "e.txt")
    assert back[0][0][0] == Label(1, (0, 2)) and back[1] == []


def test_bad_measurement_file(tmp_path):
    (tmp_path / "m.txt").write_text("measurements V=2 horizon=1\n0 5 1.0 2.0\n")
    with pytest.raises(FormatError, match="line 2"):
        read_measurements(tmp_path / "m.txt")


def test_shipped_configs():
    default = load_shipped("default")
    assert len(default.scenario.sensors) == 8 and default.runs == 100
    s = default.scenario.sensors[0]
    assert s.detection_probability == 0.95 and s.clutter_rate == 15.0
    assert np.array_equal(s.R, np.diag([100.0, 100.0]))
    assert default.filter.motion.survival_probability == 0.99
    assert np.array_equal(default.filter.birth.prior.covariance, np.diag([1e10, 2500.0, 1e10, 2500.0]))
    assert default.filter.birth.num_gibbs_iterations == 250
    assert (default.metric.cutoff, default.metric.order, default.metric.window, default.metric.weight_power) == \
        (200.0, 1.0, 5, 0.0)
    desk = load_shipped("desk")
    assert len(desk.scenario.sensors) == 2 and len(desk.scenario.targets) == 5 and desk.runs == 20


def test_default_peak_cardinality():
    sc = load_shipped("default").scenario
    alive = [sum(t.birth <= k < t.death for t in sc.targets) for k in range(sc.horizon)]
    assert max(alive) == 22


def test_parse_mode():
    m = parse_mode("lmb:stochastic/herded")
    assert (m.filter, m.birth, m.update) == ("lmb", "stochastic", "herded")
    with pytest.raises(ConfigError):
        parse_mode("glmb:greedy/herded")


def test_invalid_values_rejected(tmp_path):
    for old, new in [("clutter_rate: 3.0", "clutter_rate: -1"), ("iterations: 20", "iterations: 0"),
                     ("death: 5", "death: 1")]:
        p = tmp_path / "x.yaml"
        p.write_text(TINY.replace(old, new))
        with pytest.raises(ConfigError):
            load_config(p)
