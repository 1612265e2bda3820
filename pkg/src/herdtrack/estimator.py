"""scikit-learn style front end for the multi-sensor trackers."""
from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .birth import BirthConfig
from .core import PruneConfig
from .filters import FilterConfig, initial_state, step
from .gibbs import GibbsConfig
from .metrics import MetricConfig, ospa2_series, trajectories_from_estimates
from .io import truth_trajectories
from .models import BirthPrior, MeasurementFrame, MotionModel, SensorModel


def check_frames(X, n_sensors=None) -> list:
    """Coerce ``X`` into a list of :class:`MeasurementFrame`.

    Accepts frames, or per-step sequences of per-sensor ``(m, 2)`` arrays.
    Frame times are reset to the position in the sequence.
    """
    frames = []
    for k, item in enumerate(X):
        per_sensor = item.per_sensor if isinstance(item, MeasurementFrame) else item
        arrs = []
        for z in per_sensor:
            a = np.asarray(z, dtype=float)
            if a.size and (a.ndim != 2 or a.shape[1] != 2):
                raise ValueError(f"frame {k}: measurements must have shape (m, 2), got {a.shape}")
            if not np.all(np.isfinite(a)):
                raise ValueError(f"frame {k}: measurements contain NaN or inf")
            arrs.append(a.reshape(-1, 2))
        if n_sensors is not None and len(arrs) != n_sensors:
            raise ValueError(f"frame {k}: expected {n_sensors} sensors, got {len(arrs)}")
        frames.append(MeasurementFrame(k, tuple(arrs)))
    return frames


class MultiSensorTracker(BaseEstimator):
    """LMB / delta-GLMB tracker with herded or stochastic Gibbs samplers.

    ``fit(X)`` runs the recursion over a frame sequence and stores the
    per-step estimates in ``estimates_``; ``partial_fit`` advances one frame.
    ``predict`` returns the estimates for the frames seen so far.
    """

    def __init__(self, sensors=None, kind="glmb", birth_mode="herded", update_mode="herded",
                 birth_iterations=250, update_iterations=250, r_b_max=0.1, lambda_b=2.0, psi_bar_cap=1e4,
                 motion=None, birth_prior=None, prune=None, seed=0):
        self.sensors = sensors
        self.kind = kind
        self.birth_mode = birth_mode
        self.update_mode = update_mode
        self.birth_iterations = birth_iterations
        self.update_iterations = update_iterations
        self.r_b_max = r_b_max
        self.lambda_b = lambda_b
        self.psi_bar_cap = psi_bar_cap
        self.motion = motion
        self.birth_prior = birth_prior
        self.prune = prune
        self.seed = seed

    def _config(self) -> FilterConfig:
        sensors = self.sensors if self.sensors is not None else (SensorModel(1),)
        sensors = tuple(s if isinstance(s, SensorModel) else SensorModel(**s) for s in sensors)
        return FilterConfig(
            kind=self.kind,
            update=GibbsConfig(self.update_iterations, self.update_mode, self.seed),
            birth=BirthConfig(self.r_b_max, self.lambda_b, self.birth_iterations, self.psi_bar_cap,
                              self.birth_prior or BirthPrior(), self.birth_mode, self.seed),
            prune=self.prune or PruneConfig(),
            motion=self.motion or MotionModel(),
            sensors=sensors,
        )

    def _reset(self):
        self.config_ = self._config()
        self.state_ = initial_state(self.config_)
        self.estimates_ = []
        self.n_sensors_ = len(self.config_.sensors)

    def fit(self, X, y=None):
        self._reset()
        for frame in check_frames(X, self.n_sensors_):
            self._advance(frame)
        return self

    def partial_fit(self, X, y=None):
        """Consume a sequence of further frames without resetting."""
        if not hasattr(self, "state_"):
            self._reset()
        for frame in check_frames(X, self.n_sensors_):
            self._advance(frame)
        return self

    def _advance(self, frame: MeasurementFrame):
        k = len(self.estimates_)
        frame = MeasurementFrame(k, frame.per_sensor)
        self.state_, est = step(self.state_, frame, self.config_, k)
        self.estimates_.append(est)

    def predict(self, X=None):
        """Per-step ``[(label, state), ...]`` lists; with ``X`` the tracker is refit first."""
        if X is not None:
            self.fit(X)
        check_is_fitted(self, "estimates_")
        return list(self.estimates_)

    def fit_predict(self, X, y=None):
        return self.fit(X).predict()

    def score(self, X, y, metric: MetricConfig = MetricConfig()):
        """Negative mean OSPA(2) against truth ``y`` (per-step ``{id: state}``)."""
        est = self.fit_predict(X)
        series = ospa2_series(truth_trajectories(y), trajectories_from_estimates(est), len(est), metric)
        return -float(series.mean())
