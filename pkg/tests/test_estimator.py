import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from herdtrack.estimator import MultiSensorTracker, check_frames
from herdtrack.models import MotionModel, Scenario, TargetSpec, simulate

from conftest import make_sensors


@pytest.fixture(scope="module")
def data():
    sensors = make_sensors(2, clutter_rate=3.0)
    sc = Scenario(8, sensors, MotionModel(), (TargetSpec(0, 8, [200.0, 4.0, -100.0, 1.0]),))
    truth, frames = simulate(sc, 2)
    return sensors, truth, frames


def tracker(sensors, **kw):
    return MultiSensorTracker(sensors=sensors, birth_iterations=40, update_iterations=40, **kw)


def test_params_roundtrip(data):
    est = tracker(data[0], kind="lmb")
    params = est.get_params()
    assert params["kind"] == "lmb" and params["birth_iterations"] == 40
    est.set_params(update_mode="stochastic", seed=4)
    assert est.get_params()["update_mode"] == "stochastic"
    assert clone(est).get_params()["seed"] == 4


def test_fit_predict(data):
    sensors, truth, frames = data
    est = tracker(sensors).fit(frames)
    out = est.predict()
    assert len(out) == len(frames) == len(est.estimates_)
    assert est.n_sensors_ == 2
    assert any(len(e) == 1 for e in out)


def test_partial_fit_matches_fit(data):
    sensors, _, frames = data
    full = tracker(sensors).fit(frames).predict()
    inc = tracker(sensors)
    inc.partial_fit(frames[:3])
    inc.partial_fit(frames[3:])
    got = inc.predict()
    assert [[str(l) for l, _ in e] for e in got] == [[str(l) for l, _ in e] for e in full]


def test_accepts_raw_arrays(data):
    sensors, _, frames = data
    raw = [[np.asarray(z) for z in f.per_sensor] for f in frames]
    a = tracker(sensors).fit_predict(raw)
    b = tracker(sensors).fit_predict(frames)
    assert all(np.array_equal(x, y) for ea, eb in zip(a, b) for (_, x), (_, y) in zip(ea, eb))


def test_score_is_negative_mean_ospa2(data):
    sensors, truth, frames = data
    s = tracker(sensors).score(frames, truth)
    assert -200.0 <= s <= 0.0


def test_unfitted_predict_raises(data):
    with pytest.raises(NotFittedError):
        tracker(data[0]).predict()


def test_check_frames_validation():
    with pytest.raises(ValueError):
        check_frames([[np.zeros((1, 3))]])
    with pytest.raises(ValueError):
        check_frames([[np.array([[np.nan, 0.0]])]])
    with pytest.raises(ValueError):
        check_frames([[np.zeros((0, 2))]], n_sensors=2)
