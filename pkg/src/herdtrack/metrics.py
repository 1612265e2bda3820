"""OSPA and OSPA(2) distances for labeled multi-target estimates."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import linear_sum_assignment

POSITION_INDICES = (0, 2)


@dataclass(frozen=True)
class MetricConfig:
    cutoff: float = 200.0
    order: float = 1.0
    window: int = 5
    weight_power: float = 0.0

    def __post_init__(self):
        if self.cutoff <= 0:
            raise ValueError("cutoff must be positive")
        if self.order < 1:
            raise ValueError("order must be >= 1")
        if self.window < 1:
            raise ValueError("window must be >= 1")


def _ospa_from_matrix(D: np.ndarray, c: float, p: float) -> float:
    """OSPA given the ``|X| x |Y|`` matrix of cut-off base distances."""
    m, n = D.shape
    if m == 0 and n == 0:
        return 0.0
    if m == 0 or n == 0:
        return float(c)
    cost = np.minimum(D, c) ** p
    rows, cols = linear_sum_assignment(cost)
    # fsum is exactly rounded, so the result does not depend on orientation
    total = math.fsum(cost[rows, cols]) + (c ** p) * abs(m - n)
    return float(min(c, (total / max(m, n)) ** (1.0 / p)))


def ospa(X, Y, c: float = 200.0, p: float = 1.0) -> float:
    X = np.asarray(X, dtype=float)
    Y = np.asarray(Y, dtype=float)
    if X.size == 0:
        X = X.reshape(0, Y.shape[1] if Y.ndim == 2 else 0)
    if Y.size == 0:
        Y = Y.reshape(0, X.shape[1] if X.ndim == 2 else 0)
    if X.ndim != 2 or Y.ndim != 2 or (len(X) and len(Y) and X.shape[1] != Y.shape[1]):
        raise ValueError("point sets must be 2-d arrays with matching dimension")
    if len(X) == 0 or len(Y) == 0:
        return _ospa_from_matrix(np.zeros((len(X), len(Y))), c, p)
    D = np.linalg.norm(X[:, None, :] - Y[None, :, :], axis=-1)
    return _ospa_from_matrix(D, c, p)


def trajectories_from_estimates(estimates_per_step, positions=POSITION_INDICES) -> dict:
    """``{label: {step: position}}`` from per-step ``[(label, state), ...]`` lists."""
    out = {}
    for k, est in enumerate(estimates_per_step):
        for label, x in est:
            out.setdefault(label, {})[k] = np.asarray(x, dtype=float)[list(positions)]
    return out


def _window_weights(times, power):
    w = np.array([(i + 1.0) ** power for i in range(len(times))])
    return w / w.sum()


def trajectory_distance(a: dict, b: dict, times, c: float, p: float = 1.0, weights=None) -> float:
    """Time-averaged cut-off distance between two trajectories over ``times``.

    Steps where only one trajectory exists count ``c``; steps where neither
    exists are skipped, and the average runs over the union of their supports.
    """
    if weights is None:
        weights = np.ones(len(times))
    num = 0.0
    den = 0.0
    for t, w in zip(times, weights):
        pa, pb = a.get(t), b.get(t)
        if pa is None and pb is None:
            continue
        d = c if pa is None or pb is None else min(c, float(np.linalg.norm(pa - pb)))
        num += w * d ** p
        den += w
    if den == 0:
        return 0.0
    return (num / den) ** (1.0 / p)


def ospa2(truth: dict, estimates: dict, config: MetricConfig = MetricConfig(), times=None) -> float:
    """OSPA(2) between two trajectory sets over a time window.

    ``truth`` and ``estimates`` map a track id to ``{step: position}``.  Only
    trajectories with at least one point in the window take part.
    """
    if times is None:
        steps = {t for tr in list(truth.values()) + list(estimates.values()) for t in tr}
        if not steps:
            raise ValueError("empty window")
        end = max(steps)
        times = list(range(end - config.window + 1, end + 1))
    times = list(times)
    if not times:
        raise ValueError("empty window")
    weights = _window_weights(times, config.weight_power)
    tset = set(times)
    X = [tr for _, tr in sorted(truth.items(), key=lambda kv: kv[0]) if tset.intersection(tr)]
    Y = [tr for _, tr in sorted(estimates.items(), key=lambda kv: kv[0]) if tset.intersection(tr)]
    D = np.zeros((len(X), len(Y)))
    for i, x in enumerate(X):
        for j, y in enumerate(Y):
            D[i, j] = trajectory_distance(x, y, times, config.cutoff, config.order, weights)
    return _ospa_from_matrix(D, config.cutoff, config.order)


def ospa2_series(truth: dict, estimates: dict, horizon: int, config: MetricConfig = MetricConfig()) -> np.ndarray:
    """OSPA(2) at every step ``k`` over the window ending at ``k`` (clipped at 0)."""
    out = np.zeros(horizon)
    for k in range(horizon):
        times = range(max(0, k - config.window + 1), k + 1)
        out[k] = ospa2(truth, estimates, config, times)
    return out
