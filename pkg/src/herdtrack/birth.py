"""Multi-sensor measurement-adaptive birth.

A birth candidate is a measurement tuple ``J`` holding one index per sensor
(0 = the sensor missed the object, ``j >= 1`` = measurement row ``j - 1``).
Its score is the prior-averaged product of per-sensor pseudolikelihoods,
weighted by the probability that none of its measurements already belong to
an existing track.  Tuples are drawn with a (herded or stochastic) Gibbs
sampler and the visited ones become the birth LMB for the next step.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.special import logsumexp

from .core import GaussianComponent, Label, LabeledTrack, LmbDensity, RFSError
from .gibbs import ConditionalCache, GibbsConfig, GibbsSampler
from .models import BirthPrior, MeasurementFrame, MotionModel, SensorModel, kalman_batch, predict_component

ASSOCIATION_EPS = 1e-6


class InvalidMeasurementError(RFSError):
    """A measurement lies where the clutter intensity is zero."""


class DegenerateConditionalError(RFSError):
    """Every entry of a Gibbs conditional is zero."""


def clamp_association(r) -> np.ndarray:
    return np.clip(np.asarray(r, dtype=float), 0.0, 1.0 - ASSOCIATION_EPS)


@dataclass(frozen=True, eq=False)
class AssociationProbabilities:
    """Per sensor, the probability that each measurement belongs to an existing track."""

    per_sensor: tuple

    def __post_init__(self):
        object.__setattr__(self, "per_sensor", tuple(clamp_association(r).reshape(-1) for r in self.per_sensor))

    @classmethod
    def unassociated(cls, frame: MeasurementFrame) -> "AssociationProbabilities":
        return cls(tuple(np.zeros(m) for m in frame.counts()))

    def log_free(self, s: int) -> np.ndarray:
        """``log(1 - r_A)`` for sensor ``s`` with the miss entry (log 1 = 0) prepended."""
        return np.concatenate(([0.0], np.log1p(-self.per_sensor[s])))


@dataclass(frozen=True)
class BirthConfig:
    r_b_max: float = 0.1
    lambda_b: float = 2.0
    num_gibbs_iterations: int = 250
    psi_bar_cap: float = 1e4
    prior: BirthPrior = field(default_factory=BirthPrior)
    mode: str = "herded"
    seed: int = 0
    cycling: bool = True
    min_detections: int = 1

    def __post_init__(self):
        if self.num_gibbs_iterations < 1:
            raise ValueError("num_gibbs_iterations must be >= 1")
        if not 0.0 <= self.r_b_max <= 1.0:
            raise ValueError("r_b_max must lie in [0, 1]")
        if self.psi_bar_cap <= 0:
            raise ValueError("psi_bar_cap must be positive")

    def gibbs_config(self, seed=None) -> GibbsConfig:
        return GibbsConfig(self.num_gibbs_iterations, self.mode, self.seed if seed is None else seed, self.cycling)


@dataclass(frozen=True, eq=False)
class BirthCandidate:
    tuple: tuple
    psi_bar: float
    posterior: GaussianComponent
    r_u: float = 1.0
    r_hat: float = float("nan")
    r_birth: float = float("nan")
    log_psi_bar: float = float("nan")

    @property
    def detections(self) -> int:
        return sum(1 for j in self.tuple if j > 0)


def _sensor_measurements(frame: MeasurementFrame, sensor: SensorModel) -> np.ndarray:
    return frame.per_sensor[sensor.id - 1]


def _log_clutter(Z: np.ndarray, sensor: SensorModel) -> np.ndarray:
    (x0, x1), (y0, y1) = sensor.region
    inside = (Z[:, 0] >= x0) & (Z[:, 0] <= x1) & (Z[:, 1] >= y0) & (Z[:, 1] <= y1)
    if not np.all(inside):
        raise InvalidMeasurementError(f"sensor {sensor.id}: measurement outside the surveillance region")
    if sensor.clutter_rate <= 0:
        raise InvalidMeasurementError(f"sensor {sensor.id}: zero clutter intensity")
    return np.full(len(Z), math.log(sensor.clutter_rate / sensor.area))


def _log_pseudolikelihood_all(component: GaussianComponent, sensor: SensorModel, Z: np.ndarray):
    """Log pseudolikelihood of every index ``0..m`` for one sensor, plus the
    conditioned means and shared covariance for the detection branches."""
    pd = sensor.detection_probability
    log_miss = math.log1p(-pd) if pd < 1.0 else -math.inf
    if len(Z) == 0:
        return np.array([log_miss]), None, None
    log_pd = math.log(pd) if pd > 0 else -math.inf
    loglik, means, cov = kalman_batch(component.mean, component.covariance, Z, sensor.H, sensor.R)
    vals = np.concatenate(([log_miss], log_pd + loglik - _log_clutter(Z, sensor)))
    return vals, means, cov


def _log_pseudolikelihood(component: GaussianComponent, sensor: SensorModel, j: int, Z: np.ndarray):
    pd = sensor.detection_probability
    if j == 0:
        return (math.log1p(-pd) if pd < 1.0 else -math.inf), component
    if not 1 <= j <= len(Z):
        raise IndexError(f"measurement index {j} out of range for sensor {sensor.id}")
    z = Z[j - 1:j]
    log_kappa = _log_clutter(z, sensor)[0]
    loglik, means, cov = kalman_batch(component.mean, component.covariance, z, sensor.H, sensor.R)
    log_pd = math.log(pd) if pd > 0 else -math.inf
    return log_pd + loglik[0] - log_kappa, GaussianComponent(component.weight, means[0], cov)


def per_sensor_pseudolikelihood(state_density: GaussianComponent, sensor: SensorModel, j: int,
                                frame: MeasurementFrame):
    """Pseudolikelihood of index ``j`` for ``sensor`` and the conditioned density."""
    logv, comp = _log_pseudolikelihood(state_density, sensor, j, _sensor_measurements(frame, sensor))
    return math.exp(logv), comp


def log_psi_bar(tuple_, frame: MeasurementFrame, prior: BirthPrior, sensors, order=None):
    """Log of the prior-averaged multi-sensor pseudolikelihood of a tuple.

    For linear-Gaussian models the average of the product equals the product
    of the sequential per-sensor predictive factors, folded here in sensor
    order (or ``order`` if given).  Returns ``(log value, conditioned prior)``.
    """
    if len(tuple_) != len(sensors):
        raise ValueError("tuple length must equal the number of sensors")
    comp = prior.component()
    total = 0.0
    for s in (range(len(sensors)) if order is None else order):
        sensor = sensors[s]
        logv, comp = _log_pseudolikelihood(comp, sensor, tuple_[s], _sensor_measurements(frame, sensor))
        total += logv
    return total, comp


def psi_bar(tuple_, frame: MeasurementFrame, prior: BirthPrior, sensors, order=None):
    logv, comp = log_psi_bar(tuple_, frame, prior, sensors, order)
    return math.exp(logv), comp


def non_association_probability(tuple_, assoc: AssociationProbabilities) -> float:
    """Product of ``1 - r_A`` over the tuple's detected entries."""
    logp = 0.0
    for s, j in enumerate(tuple_):
        if j > 0:
            logp += math.log1p(-assoc.per_sensor[s][j - 1])
    return math.exp(logp)


class BirthConditional:
    """Evaluator of the Gibbs conditional for one sensor's tuple index.

    Entry ``j`` is proportional to ``(1 - r_A(j)) * min(psi_bar, cap)`` where
    ``psi_bar`` is evaluated at the tuple with sensor ``s`` set to ``j``.  The
    other sensors are folded once and then every ``j`` is scored in a batch.
    """

    def __init__(self, frame: MeasurementFrame, sensors, prior: BirthPrior,
                 assoc: AssociationProbabilities, psi_bar_cap: float = 1e4):
        if frame.num_sensors != len(sensors):
            raise ValueError("frame and sensor list disagree on the sensor count")
        self.frame = frame
        self.sensors = tuple(sensors)
        self.prior = prior
        self.assoc = assoc
        self.log_cap = math.log(psi_bar_cap)

    def log_weights(self, tuple_, s: int) -> np.ndarray:
        comp = self.prior.component()
        rest = 0.0
        for q, sensor in enumerate(self.sensors):
            if q == s:
                continue
            logv, comp = _log_pseudolikelihood(comp, sensor, tuple_[q], _sensor_measurements(self.frame, sensor))
            rest += logv
        sensor = self.sensors[s]
        vals, _, _ = _log_pseudolikelihood_all(comp, sensor, _sensor_measurements(self.frame, sensor))
        return self.assoc.log_free(s) + np.minimum(rest + vals, self.log_cap)

    def __call__(self, tuple_, s: int) -> np.ndarray:
        logw = self.log_weights(tuple_, s)
        top = logw.max()
        if not np.isfinite(top):
            raise DegenerateConditionalError(f"all conditional entries are zero for sensor {s}")
        p = np.exp(logw - top)
        return p / p.sum()


def gibbs_conditional(s: int, tuple_, frame: MeasurementFrame, prior: BirthPrior,
                      assoc: AssociationProbabilities, sensors, psi_bar_cap: float = 1e4) -> np.ndarray:
    return BirthConditional(frame, sensors, prior, assoc, psi_bar_cap)(tuple(tuple_), s)


def sample_birth_tuples(frame: MeasurementFrame, sensors, assoc: AssociationProbabilities,
                        config: BirthConfig, seed=None, cache_enabled: bool = True):
    """Run the birth Gibbs chain from the all-miss tuple.

    Returns ``(tuples, sampler)``; the sampler exposes the evaluation counters.
    """
    evaluator = BirthConditional(frame, sensors, config.prior, assoc, config.psi_bar_cap)
    sampler = GibbsSampler(evaluator, config.gibbs_config(seed), ConditionalCache(evaluator, cache_enabled))
    tuples = sampler.run((0,) * len(sensors))
    return tuples, sampler


def make_candidates(tuples, frame: MeasurementFrame, sensors, assoc: AssociationProbabilities,
                    config: BirthConfig) -> list:
    """Score tuples: capped psi_bar, conditioned prior and non-association probability."""
    log_cap = math.log(config.psi_bar_cap)
    out = []
    for J in tuples:
        logv, post = log_psi_bar(J, frame, config.prior, sensors)
        logv = min(logv, log_cap)
        out.append(BirthCandidate(tuple(J), math.exp(logv), post, non_association_probability(J, assoc),
                                  log_psi_bar=logv))
    return out


def score_candidates(candidates, config: BirthConfig) -> list:
    """Fill in ``r_hat`` (normalized over the given set) and ``r_birth``."""
    cands = list(candidates)
    if not cands:
        return []
    logs = []
    for c in cands:
        lp = c.log_psi_bar if np.isfinite(c.log_psi_bar) else math.log(c.psi_bar)
        logs.append((math.log(c.r_u) if c.r_u > 0 else -math.inf) + lp)
    logs = np.array(logs)
    r_hat = np.exp(logs - logsumexp(logs))
    return [replace(c, r_hat=float(rh), r_birth=float(min(config.r_b_max, rh * config.lambda_b)))
            for c, rh in zip(cands, r_hat)]


def construct_birth_lmb(candidates, config: BirthConfig, motion: MotionModel, k: int) -> LmbDensity:
    """Birth LMB for step ``k + 1`` from candidates built on step ``k`` measurements.

    Existence normalization runs over every candidate given; tuples with fewer
    than ``config.min_detections`` detections share that normalization but are
    not emitted as tracks.
    """
    tracks = []
    for c in score_candidates(candidates, config):
        if c.detections < config.min_detections or not c.r_birth > 0:
            continue
        pred = predict_component(c.posterior.with_weight(1.0), motion)
        tracks.append(LabeledTrack(Label(k + 1, c.tuple), c.r_birth, (pred,)))
    return LmbDensity(tuple(tracks))


def adaptive_birth(frame: MeasurementFrame, sensors, assoc: AssociationProbabilities, config: BirthConfig,
                   motion: MotionModel, k: int, seed=None):
    """Full pipeline: sample tuples, score them, assemble the next-step birth LMB.

    Returns ``(birth_lmb, sampler)``.
    """
    tuples, sampler = sample_birth_tuples(frame, sensors, assoc, config, seed)
    candidates = make_candidates(tuples, frame, sensors, assoc, config)
    return construct_birth_lmb(candidates, config, motion, k), sampler
