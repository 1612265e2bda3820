"""Linear-Gaussian motion/sensor/clutter models and scenario simulation.

State layout is ``[p_x, v_x, p_y, v_y]``; measurements are ``[p_x, p_y]``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from .core import GaussianComponent, RFSError

LOG_2PI = math.log(2.0 * math.pi)
POSITION_SELECTOR = np.array([[1.0, 0.0, 0.0, 0.0], [0.0, 0.0, 1.0, 0.0]])


class NumericalError(RFSError):
    """A covariance that must be positive definite is not."""


class ConfigError(RFSError):
    """Invalid model or scenario configuration."""


def make_rng(seed: int) -> np.random.Generator:
    """Seeded generator backed by Philox, a counter-based bit generator.

    Philox output is specified by its algorithm alone, so a seed reproduces the
    same stream on any platform and numpy build.
    """
    return np.random.Generator(np.random.Philox(int(seed)))


@dataclass(frozen=True, eq=False)
class MotionModel:
    """Nearly-constant-velocity dynamics with white acceleration noise."""

    delta_t: float = 1.0
    accel_cov: np.ndarray = field(default_factory=lambda: np.diag([5.0, 5.0]))
    survival_probability: float = 0.99

    def __post_init__(self):
        object.__setattr__(self, "accel_cov", np.asarray(self.accel_cov, dtype=float))

    @property
    def F(self) -> np.ndarray:
        d = self.delta_t
        return np.kron(np.eye(2), np.array([[1.0, d], [0.0, 1.0]]))

    @property
    def G(self) -> np.ndarray:
        d = self.delta_t
        return np.kron(np.eye(2), np.array([[d * d / 2.0], [d]]))

    @property
    def Q(self) -> np.ndarray:
        G = self.G
        Q = G @ self.accel_cov @ G.T
        return 0.5 * (Q + Q.T)


@dataclass(frozen=True, eq=False)
class SensorModel:
    id: int
    R: np.ndarray = field(default_factory=lambda: np.diag([100.0, 100.0]))
    detection_probability: float = 0.95
    clutter_rate: float = 15.0
    region: tuple = ((-1000.0, 1000.0), (-1000.0, 1000.0))
    H: np.ndarray = field(default_factory=lambda: POSITION_SELECTOR.copy())

    def __post_init__(self):
        R = np.asarray(self.R, dtype=float)
        if R.shape != (2, 2) or not np.allclose(R, R.T) or np.linalg.eigvalsh(R).min() <= 0:
            raise ConfigError(f"sensor {self.id}: R must be a symmetric positive-definite 2x2 matrix")
        if self.clutter_rate < 0:
            raise ConfigError(f"sensor {self.id}: clutter_rate must be >= 0")
        if not 0.0 <= self.detection_probability <= 1.0:
            raise ConfigError(f"sensor {self.id}: detection_probability must lie in [0, 1]")
        region = tuple((float(lo), float(hi)) for lo, hi in self.region)
        if len(region) != 2 or any(hi <= lo for lo, hi in region):
            raise ConfigError(f"sensor {self.id}: region must have positive area")
        object.__setattr__(self, "R", R)
        object.__setattr__(self, "H", np.asarray(self.H, dtype=float))
        object.__setattr__(self, "region", region)

    @property
    def area(self) -> float:
        (x0, x1), (y0, y1) = self.region
        return (x1 - x0) * (y1 - y0)

    def contains(self, z) -> bool:
        (x0, x1), (y0, y1) = self.region
        return x0 <= z[0] <= x1 and y0 <= z[1] <= y1


@dataclass(frozen=True, eq=False)
class BirthPrior:
    mean: np.ndarray = field(default_factory=lambda: np.zeros(4))
    covariance: np.ndarray = field(default_factory=lambda: np.diag([100000.0**2, 50.0**2, 100000.0**2, 50.0**2]))

    def __post_init__(self):
        cov = np.asarray(self.covariance, dtype=float)
        if np.linalg.eigvalsh(cov).min() <= 0:
            raise ConfigError("birth prior covariance must be positive definite")
        object.__setattr__(self, "mean", np.asarray(self.mean, dtype=float))
        object.__setattr__(self, "covariance", cov)

    def component(self) -> GaussianComponent:
        return GaussianComponent(1.0, self.mean, self.covariance)


@dataclass(frozen=True, eq=False)
class MeasurementFrame:
    """Measurements from every sensor at one step.  ``per_sensor[s]`` is an
    ``(m_s, 2)`` array; measurement ``j`` of a tuple refers to row ``j - 1``."""

    time: int
    per_sensor: tuple

    def __post_init__(self):
        arrs = []
        for z in self.per_sensor:
            a = np.array(z, dtype=float).reshape(-1, 2)
            a.setflags(write=False)
            arrs.append(a)
        if not arrs:
            raise ConfigError("a frame needs at least one sensor")
        object.__setattr__(self, "per_sensor", tuple(arrs))

    @property
    def num_sensors(self) -> int:
        return len(self.per_sensor)

    def counts(self) -> tuple:
        return tuple(len(z) for z in self.per_sensor)


def predict_component(component: GaussianComponent, model: MotionModel) -> GaussianComponent:
    F = model.F
    cov = F @ component.covariance @ F.T + model.Q
    return GaussianComponent(component.weight, F @ component.mean, 0.5 * (cov + cov.T))


def _innovation_factor(cov: np.ndarray, H: np.ndarray, R: np.ndarray):
    S = H @ cov @ H.T + R
    S = 0.5 * (S + S.T)
    try:
        cf = cho_factor(S, lower=True)
    except np.linalg.LinAlgError as exc:
        raise NumericalError("innovation covariance is not positive definite") from exc
    return S, cf


def kalman_batch(mean: np.ndarray, cov: np.ndarray, Z: np.ndarray, H: np.ndarray, R: np.ndarray):
    """Condition one Gaussian on each row of ``Z`` separately.

    Returns ``(log_likelihoods, posterior_means, posterior_cov)``.  The
    posterior covariance does not depend on the measurement value, so it is
    shared.  Joseph form keeps it symmetric PD when the prior is very diffuse.
    """
    S, cf = _innovation_factor(cov, H, R)
    logdet = 2.0 * np.log(np.diag(cf[0])).sum()
    PHt = cov @ H.T
    K = cho_solve(cf, PHt.T).T
    innov = np.atleast_2d(Z) - H @ mean
    maha = np.einsum("ij,ij->i", innov, cho_solve(cf, innov.T).T)
    dim = H.shape[0]
    loglik = -0.5 * (maha + logdet + dim * LOG_2PI)
    means = mean + innov @ K.T
    IKH = np.eye(cov.shape[0]) - K @ H
    post = IKH @ cov @ IKH.T + K @ R @ K.T
    return loglik, means, 0.5 * (post + post.T)


def measurement_marginal(component: GaussianComponent, z, sensor: SensorModel):
    """Return ``(N(z; H m, H P H' + R), conditioned component)``."""
    loglik, means, post = kalman_batch(component.mean, component.covariance, np.asarray(z, float)[None, :],
                                       sensor.H, sensor.R)
    return math.exp(loglik[0]), GaussianComponent(component.weight, means[0], post)


def clutter_intensity(z, sensor: SensorModel) -> float:
    """Uniform Poisson clutter intensity at ``z``; zero outside the region."""
    if not sensor.contains(z):
        return 0.0
    return sensor.clutter_rate / sensor.area


@dataclass(frozen=True, eq=False)
class TargetSpec:
    birth: int
    death: int  # first step at which the target is gone
    state: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "state", np.asarray(self.state, dtype=float))
        if self.death <= self.birth:
            raise ConfigError(f"target born at {self.birth} must die after it is born (death={self.death})")


@dataclass(frozen=True, eq=False)
class Scenario:
    horizon: int
    sensors: tuple
    motion: MotionModel = field(default_factory=MotionModel)
    targets: tuple = ()
    process_noise: bool = False


def simulate(scenario: Scenario, seed: int):
    """Simulate ground truth and per-sensor measurements.

    Returns ``(truth, frames)``: ``truth[k]`` maps target index to its state at
    step ``k``; ``frames[k]`` is a :class:`MeasurementFrame`.  Detections that
    land outside a sensor's region are not reported.  Each sensor's list is
    shuffled so its order carries no information.
    """
    if not scenario.sensors:
        raise ConfigError("sensors: required")
    rng = make_rng(seed)
    motion = scenario.motion
    F = motion.F
    G = motion.G
    accel_chol = np.linalg.cholesky(motion.accel_cov) if scenario.process_noise else None

    truth = [dict() for _ in range(scenario.horizon)]
    for idx, tgt in enumerate(scenario.targets):
        x = tgt.state.copy()
        for k in range(max(tgt.birth, 0), min(tgt.death, scenario.horizon)):
            if k > tgt.birth:
                x = F @ x
                if accel_chol is not None:
                    x = x + G @ (accel_chol @ rng.standard_normal(2))
            truth[k][idx] = x.copy()

    frames = []
    for k in range(scenario.horizon):
        per_sensor = []
        for sensor in scenario.sensors:
            Rc = np.linalg.cholesky(sensor.R)
            pts = []
            for idx in sorted(truth[k]):
                if rng.random() < sensor.detection_probability:
                    z = sensor.H @ truth[k][idx] + Rc @ rng.standard_normal(2)
                    if sensor.contains(z):
                        pts.append(z)
            n_clutter = rng.poisson(sensor.clutter_rate)
            (x0, x1), (y0, y1) = sensor.region
            for _ in range(n_clutter):
                pts.append(np.array([rng.uniform(x0, x1), rng.uniform(y0, y1)]))
            arr = np.array(pts, dtype=float).reshape(-1, 2)
            arr = arr[rng.permutation(len(arr))]
            per_sensor.append(arr)
        frames.append(MeasurementFrame(k, tuple(per_sensor)))
    return truth, frames
