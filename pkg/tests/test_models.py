import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.stats import multivariate_normal

from herdtrack.core import GaussianComponent
from herdtrack.models import (
    ConfigError,
    MotionModel,
    NumericalError,
    Scenario,
    SensorModel,
    TargetSpec,
    clutter_intensity,
    measurement_marginal,
    predict_component,
    simulate,
)

from conftest import make_sensors, random_spd


def test_predict_zero_velocity_fixed_point():
    m = MotionModel(accel_cov=np.zeros((2, 2)))
    c = predict_component(GaussianComponent(1.0, np.zeros(4), np.eye(4)), m)
    assert np.array_equal(c.mean, np.zeros(4))


def test_predict_constant_velocity():
    m = MotionModel(accel_cov=np.zeros((2, 2)))
    c = predict_component(GaussianComponent(0.3, [10, 1, 0, 0], np.eye(4)), m)
    assert np.allclose(c.mean, [11, 1, 0, 0])
    assert c.weight == 0.3


def test_predict_trace_increases():
    c0 = GaussianComponent(1.0, np.zeros(4), np.eye(4))
    c1 = predict_component(c0, MotionModel())
    assert np.trace(c1.covariance) > np.trace(c0.covariance)


def test_motion_matrices():
    m = MotionModel(delta_t=2.0)
    block = np.array([[1, 2], [0, 1]])
    assert np.array_equal(m.F, np.kron(np.eye(2), block))
    g = np.array([[2.0], [2.0]])
    assert np.allclose(m.Q, np.kron(np.eye(2), g) @ np.diag([5, 5]) @ np.kron(np.eye(2), g).T)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_predict_preserves_symmetry_and_pd(seed):
    rng = np.random.default_rng(seed)
    c = GaussianComponent(1.0, rng.normal(size=4), random_spd(rng, 4, scale=rng.uniform(0.01, 100)))
    for _ in range(5):
        c = predict_component(c, MotionModel())
        assert np.array_equal(c.covariance, c.covariance.T)
        assert np.linalg.eigvalsh(c.covariance).min() > 0


def test_marginal_zero_innovation_peak():
    rng = np.random.default_rng(1)
    P = random_spd(rng, 4, 10.0)
    mean = rng.normal(size=4) * 50
    s = SensorModel(1)
    c = GaussianComponent(1.0, mean, P)
    val, post = measurement_marginal(c, s.H @ mean, s)
    S = s.H @ P @ s.H.T + s.R
    assert val == pytest.approx(1.0 / (2 * np.pi * np.sqrt(np.linalg.det(S))), rel=1e-12)
    assert np.allclose(post.mean, mean, atol=1e-9)


def test_marginal_uninformative_measurement():
    s = SensorModel(1, R=1e12 * np.eye(2))
    c = GaussianComponent(1.0, [3.0, 1.0, -2.0, 0.5], np.eye(4) * 25)
    _, post = measurement_marginal(c, [900.0, -700.0], s)
    assert np.allclose(post.mean, c.mean, atol=1e-3)


def test_marginal_not_pd_raises():
    s = SensorModel(1)
    object.__setattr__(s, "R", -1e6 * np.eye(2))
    with pytest.raises(NumericalError):
        measurement_marginal(GaussianComponent(1.0, np.zeros(4), np.eye(4)), [0.0, 0.0], s)


def _grid_posterior(mean, P, z, sensor, n=25, half=6.0):
    """Brute-force conditional mean and evidence on a grid in prior-whitened coordinates."""
    L = np.linalg.cholesky(P)
    u = np.linspace(-half, half, n)
    du = u[1] - u[0]
    U = np.stack(np.meshgrid(u, u, u, u, indexing="ij"), -1).reshape(-1, 4)
    X = mean + U @ L.T
    prior = np.exp(-0.5 * (U ** 2).sum(1)) / (2 * np.pi) ** 2  # density in u
    lik = multivariate_normal(np.zeros(2), sensor.R).pdf(z - X @ sensor.H.T)
    w = prior * lik
    evidence = w.sum() * du ** 4
    return evidence, (w[:, None] * X).sum(0) / w.sum()


@pytest.mark.parametrize("seed", range(4))
def test_marginal_matches_grid_quadrature(seed):
    rng = np.random.default_rng(seed)
    P = random_spd(rng, 4, 20.0)
    mean = rng.normal(size=4) * 10
    s = SensorModel(1, R=np.diag(rng.uniform(50, 150, 2)))
    z = s.H @ mean + rng.normal(size=2) * 10
    val, post = measurement_marginal(GaussianComponent(1.0, mean, P), z, s)
    ev, cm = _grid_posterior(mean, P, z, s)
    scale = np.sqrt(np.diag(P))
    assert np.all(np.abs(post.mean - cm) <= 1e-3 * np.maximum(scale, 1.0))
    assert val == pytest.approx(ev, rel=1e-3)


@pytest.mark.parametrize("seed", range(3))
def test_marginal_separable_identity(seed):
    # diagonal prior and R: the 4D integral reduces to a product of two 1D integrals
    rng = np.random.default_rng(100 + seed)
    sd = rng.uniform(5, 40, 4)
    r = rng.uniform(50, 150, 2)
    mean = rng.normal(size=4) * 20
    s = SensorModel(1, R=np.diag(r))
    z = s.H @ mean + rng.normal(size=2) * 15
    val, _ = measurement_marginal(GaussianComponent(1.0, mean, np.diag(sd ** 2)), z, s)
    total = 1.0
    for axis, zi, ri in ((0, z[0], r[0]), (2, z[1], r[1])):
        x = np.linspace(mean[axis] - 8 * sd[axis], mean[axis] + 8 * sd[axis], 801)
        f = np.exp(-0.5 * ((x - mean[axis]) / sd[axis]) ** 2) / (np.sqrt(2 * np.pi) * sd[axis])
        g = np.exp(-0.5 * (zi - x) ** 2 / ri) / np.sqrt(2 * np.pi * ri)
        total *= np.trapezoid(f * g, x)
    assert val == pytest.approx(total, rel=1e-3)


def test_clutter_intensity_values():
    s = SensorModel(1)
    assert clutter_intensity([0, 0], s) == pytest.approx(15 / 4e6)
    assert clutter_intensity([0, 0], SensorModel(1, clutter_rate=0.0)) == 0.0
    big = SensorModel(1, region=((-1000, 3000), (-1000, 1000)))
    assert clutter_intensity([0, 0], big) == pytest.approx(clutter_intensity([0, 0], s) / 2)
    assert clutter_intensity([5000, 0], s) == 0.0


def test_sensor_validation():
    with pytest.raises(ConfigError):
        SensorModel(1, R=np.diag([1.0, -1.0]))
    with pytest.raises(ConfigError):
        SensorModel(1, clutter_rate=-1)
    with pytest.raises(ConfigError):
        SensorModel(1, region=((0, 0), (0, 1)))


def _static(V, **kw):
    sensors = make_sensors(V, **kw)
    motion = MotionModel(accel_cov=np.zeros((2, 2)))
    return Scenario(30, sensors, motion, (TargetSpec(0, 30, [100.0, 0, -200.0, 0]),))


def test_simulate_perfect_detection():
    truth, frames = simulate(_static(3, detection_probability=1.0, clutter_rate=0.0), 5)
    assert all(f.counts() == (1, 1, 1) for f in frames)
    resid = np.array([f.per_sensor[0][0] - [100.0, -200.0] for f in frames])
    assert np.all(np.abs(resid) < 60)  # 6 sigma for R = 100
    assert all(np.array_equal(t[0], [100.0, 0, -200.0, 0]) for t in truth)


def test_simulate_no_detection():
    _, frames = simulate(_static(2, detection_probability=0.0, clutter_rate=0.0), 5)
    assert all(f.counts() == (0, 0) for f in frames)


def test_simulate_clutter_mean():
    sc = Scenario(1000, make_sensors(2, detection_probability=0.0))
    _, frames = simulate(sc, 11)
    counts = np.array([f.counts() for f in frames])
    assert np.all((14.5 <= counts.mean(0)) & (counts.mean(0) <= 15.5))


def test_simulate_deterministic():
    sc = _static(2)
    t1, f1 = simulate(sc, 42)
    t2, f2 = simulate(sc, 42)
    _, f3 = simulate(sc, 43)
    assert all(np.array_equal(a, b) for x, y in zip(f1, f2) for a, b in zip(x.per_sensor, y.per_sensor))
    assert any(not np.array_equal(a, b) for x, y in zip(f1, f3) for a, b in zip(x.per_sensor, y.per_sensor))


def test_simulate_requires_sensors():
    with pytest.raises(ConfigError, match="sensors: required"):
        simulate(Scenario(3, ()), 0)


def test_simulate_clutter_inside_region():
    sensors = make_sensors(1, region=((0, 10), (0, 20)))
    _, frames = simulate(Scenario(50, sensors), 3)
    z = np.concatenate([f.per_sensor[0] for f in frames])
    assert np.all((z[:, 0] >= 0) & (z[:, 0] <= 10) & (z[:, 1] >= 0) & (z[:, 1] <= 20))
