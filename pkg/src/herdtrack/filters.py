"""Gaussian-mixture LMB and delta-GLMB filters with Gibbs ranked assignment.

Multi-sensor updates use an iterated corrector: one single-sensor update per
sensor in id order.  Every update runs on a GLMB whose hypotheses carry
per-entry existence probabilities (survival or birth probabilities straight
after prediction, 1 afterwards), so the LMB filter is the same update
preceded by LMB -> GLMB conversion and followed by marginalization.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.special import logsumexp

from .birth import AssociationProbabilities, BirthConfig, InvalidMeasurementError, adaptive_birth, clamp_association
from .core import (
    GaussianComponent,
    GlmbDensity,
    GlmbHypothesis,
    LabelCollisionError,
    LabeledTrack,
    LmbDensity,
    PruneConfig,
    TrackEntry,
    extract_estimates,
    normalize_mixture,
    prune,
)
from .gibbs import ConditionalCache, GibbsConfig, GibbsSampler, SamplerError
from .models import MeasurementFrame, MotionModel, SensorModel, kalman_batch, predict_component

MISS = 0


def derive_seed(seed: int, *key: int) -> int:
    """Independent child seed for a (step, sensor, hypothesis, ...) key."""
    ss = np.random.SeedSequence(int(seed), spawn_key=tuple(int(k) for k in key))
    return int(ss.generate_state(1, dtype=np.uint64)[0])


@dataclass(frozen=True)
class FilterConfig:
    kind: str = "glmb"
    update: GibbsConfig = field(default_factory=GibbsConfig)
    birth: BirthConfig = field(default_factory=BirthConfig)
    prune: PruneConfig = field(default_factory=PruneConfig)
    motion: MotionModel = field(default_factory=MotionModel)
    sensors: tuple = ()
    estimate_threshold: float = 0.5

    def __post_init__(self):
        if self.kind not in ("lmb", "glmb"):
            raise ValueError(f"unknown filter kind {self.kind!r}")
        ids = [s.id for s in self.sensors]
        if ids != list(range(1, len(ids) + 1)):
            raise ValueError("sensor ids must be 1..V in order")


# ---------------------------------------------------------------- prediction

def lmb_to_glmb(density: LmbDensity) -> GlmbDensity:
    table = tuple(TrackEntry(t.label, t.mixture) for t in density.tracks)
    hyp = GlmbHypothesis(1.0, tuple(range(len(table))), tuple(t.existence for t in density.tracks))
    return GlmbDensity((hyp,), table)


def _predict_mixture(mixture, motion):
    return tuple(predict_component(c, motion) for c in mixture)


def predict(density, motion: MotionModel, birth: LmbDensity):
    """Chapman-Kolmogorov prediction plus union with the birth LMB."""
    ps = motion.survival_probability
    if isinstance(density, LmbDensity):
        survivors = [LabeledTrack(t.label, t.existence * ps, _predict_mixture(t.mixture, motion))
                     for t in density.tracks]
        labels = {t.label for t in survivors}
        if any(b.label in labels for b in birth.tracks):
            raise LabelCollisionError("birth label already present among survivors")
        return LmbDensity(tuple(survivors) + tuple(birth.tracks))

    table = [TrackEntry(e.label, _predict_mixture(e.mixture, motion), e.history) for e in density.track_table]
    labels = {e.label for e in table}
    if any(b.label in labels for b in birth.tracks):
        raise LabelCollisionError("birth label already present in the track table")
    first_birth = len(table)
    table.extend(TrackEntry(b.label, b.mixture) for b in birth.tracks)
    birth_idx = tuple(range(first_birth, len(table)))
    birth_r = tuple(b.existence for b in birth.tracks)
    hyps = []
    for h in density.hypotheses:
        hyps.append(GlmbHypothesis(
            h.weight,
            h.entries + birth_idx,
            tuple(r * ps for r in h.existences) + birth_r,
        ))
    return GlmbDensity(tuple(hyps), tuple(table))


# ------------------------------------------------------------ single sensor

@dataclass
class _EntryScores:
    log_detect: np.ndarray  # (m,) log of p_D * marginal / kappa, per unit existence
    comps: list  # per measurement, the conditioned mixture (built lazily)
    loglik: np.ndarray  # (c, m)
    means: np.ndarray  # (c, m, 4)
    covs: list  # (c,) shared posterior covariances


def _entry_scores(entry: TrackEntry, Z: np.ndarray, sensor: SensorModel, log_kappa: np.ndarray) -> _EntryScores:
    m = len(Z)
    c = len(entry.mixture)
    loglik = np.empty((c, m))
    means = np.empty((c, m, entry.mixture[0].mean.size))
    covs = []
    for i, comp in enumerate(entry.mixture):
        ll, mu, cov = kalman_batch(comp.mean, comp.covariance, Z, sensor.H, sensor.R)
        loglik[i] = ll
        means[i] = mu
        covs.append(cov)
    logw = np.log([comp.weight for comp in entry.mixture])
    pd = sensor.detection_probability
    log_pd = math.log(pd) if pd > 0 else -math.inf
    log_detect = log_pd + logsumexp(logw[:, None] + loglik, axis=0) - log_kappa
    return _EntryScores(log_detect, [None] * m, loglik, means, covs)


def _conditioned_mixture(entry: TrackEntry, sc: _EntryScores, j: int):
    """Mixture of ``entry`` conditioned on measurement ``j`` (1-based)."""
    if sc.comps[j - 1] is None:
        logw = np.log([comp.weight for comp in entry.mixture]) + sc.loglik[:, j - 1]
        w = np.exp(logw - logsumexp(logw))
        sc.comps[j - 1] = tuple(GaussianComponent(w[i], sc.means[i, j - 1], sc.covs[i])
                                for i in range(len(entry.mixture)))
    return sc.comps[j - 1]


class AssignmentProblem:
    """Log scores of every column for every track of one predicted hypothesis.

    Columns are ``0`` (miss), ``1..m`` (measurements) and ``m + 1`` (death).
    Structurally impossible choices hold ``-inf``.
    """

    def __init__(self, log_scores: np.ndarray):
        self.log_scores = np.asarray(log_scores, dtype=float)
        n, cols = self.log_scores.shape
        self.num_tracks = n
        self.num_measurements = cols - 2
        top = self.log_scores.max(axis=1, keepdims=True) if n else np.zeros((0, 1))
        self._scaled = np.exp(self.log_scores - top) if n else self.log_scores

    @property
    def death(self) -> int:
        return self.num_measurements + 1

    @classmethod
    def build(cls, existences, log_detect_rows, detection_probability: float) -> "AssignmentProblem":
        n = len(existences)
        m = log_detect_rows.shape[1] if n else 0
        L = np.full((n, m + 2), -math.inf)
        pd = detection_probability
        log_miss = math.log1p(-pd) if pd < 1 else -math.inf
        for i, r in enumerate(existences):
            log_r = math.log(r) if r > 0 else -math.inf
            L[i, MISS] = log_r + log_miss
            L[i, 1:m + 1] = log_r + log_detect_rows[i]
            L[i, m + 1] = math.log1p(-r) if r < 1 else -math.inf
        return cls(L)

    def conditional(self, state: tuple, i: int) -> np.ndarray:
        row = self._scaled[i].copy()
        m = self.num_measurements
        for q, col in enumerate(state):
            if q != i and 1 <= col <= m:
                row[col] = 0.0
        return row

    def log_weight(self, state) -> float:
        return float(sum(self.log_scores[i, c] for i, c in enumerate(state)))

    def initial_state(self) -> tuple:
        return tuple(MISS if np.isfinite(self.log_scores[i, MISS]) else self.death for i in range(self.num_tracks))

    def is_valid(self, state) -> bool:
        used = [c for c in state if 1 <= c <= self.num_measurements]
        return len(used) == len(set(used)) and np.isfinite(self.log_weight(state))


def ranked_assignments(problem: AssignmentProblem, config: GibbsConfig, seed: Optional[int] = None) -> list:
    """Distinct valid assignments found by a Gibbs chain from the miss/death start."""
    if problem.num_tracks == 0:
        return [()]
    cfg = config if seed is None else GibbsConfig(config.iterations, config.mode, seed, config.cycling)
    sampler = GibbsSampler(problem.conditional, cfg, ConditionalCache(problem.conditional))
    start = problem.initial_state()
    states = [start] + [s for s in sampler.run(start) if s != start]
    return [s for s in states if problem.is_valid(s)]


def update_one_sensor(density: GlmbDensity, Z, sensor: SensorModel, sampler: GibbsConfig,
                      prune_config: PruneConfig = PruneConfig(), seed_key: tuple = ()):
    """Single-sensor update of a (possibly predicted) GLMB.

    Returns ``(posterior, r_A)`` where ``r_A[j]`` is the posterior probability
    that measurement ``j + 1`` was taken by some track, clamped below one.
    """
    Z = np.asarray(Z, dtype=float).reshape(-1, 2)
    m = len(Z)
    if m:
        (x0, x1), (y0, y1) = sensor.region
        if np.any((Z[:, 0] < x0) | (Z[:, 0] > x1) | (Z[:, 1] < y0) | (Z[:, 1] > y1)) or sensor.clutter_rate <= 0:
            raise InvalidMeasurementError(f"sensor {sensor.id}: measurement with zero clutter intensity")
        log_kappa = np.full(m, math.log(sensor.clutter_rate / sensor.area))
    else:
        log_kappa = np.zeros(0)

    table = density.track_table
    scores = {}
    for h in density.hypotheses:
        for e in h.entries:
            if e not in scores:
                scores[e] = _entry_scores(table[e], Z, sensor, log_kappa) if m else None

    new_table = []
    new_index = {}
    log_weights = {}
    assoc_of = {}
    for hi, h in enumerate(density.hypotheses):
        if not h.weight > 0:
            continue
        rows = np.array([scores[e].log_detect for e in h.entries]).reshape(len(h.entries), m) if m \
            else np.zeros((len(h.entries), 0))
        problem = AssignmentProblem.build(h.existences, rows, sensor.detection_probability)
        iters = max(1, math.ceil(sampler.iterations * h.weight))
        cfg = GibbsConfig(iters, sampler.mode, sampler.seed, sampler.cycling)
        seed = derive_seed(sampler.seed, *seed_key, hi) if sampler.mode == "stochastic" else None
        log_wh = math.log(h.weight)
        for state in ranked_assignments(problem, cfg, seed):
            ents, assoc = [], []
            for e, col in zip(h.entries, state):
                if col == problem.death:
                    continue
                key = (e, col)
                idx = new_index.get(key)
                if idx is None:
                    entry = table[e]
                    mix = entry.mixture if col == MISS else _conditioned_mixture(entry, scores[e], col)
                    idx = len(new_table)
                    new_table.append(TrackEntry(entry.label, mix, entry.history + (col,)))
                    new_index[key] = idx
                ents.append(idx)
                assoc.append(col)
            order = sorted(range(len(ents)), key=lambda q: new_table[ents[q]].label)
            hkey = tuple(ents[q] for q in order)
            lw = log_wh + problem.log_weight(state)
            if hkey in log_weights:
                log_weights[hkey] = np.logaddexp(log_weights[hkey], lw)
            else:
                log_weights[hkey] = lw
                assoc_of[hkey] = tuple(assoc[q] for q in order)

    if not log_weights:
        raise SamplerError("update produced no valid hypotheses")
    keys = list(log_weights)
    lw = np.array([log_weights[k] for k in keys])
    w = np.exp(lw - logsumexp(lw))
    hyps = tuple(GlmbHypothesis(wi, k, (1.0,) * len(k), assoc_of[k]) for wi, k in zip(w, keys))
    posterior = prune(GlmbDensity(hyps, tuple(new_table)), prune_config)

    r_a = np.zeros(m)
    for h in posterior.hypotheses:
        for col in h.associations:
            if col >= 1:
                r_a[col - 1] += h.weight
    return posterior, clamp_association(r_a)


def glmb_to_lmb(density: GlmbDensity, max_components: int = 10) -> LmbDensity:
    """Marginalize an updated GLMB into an LMB (label-wise existence and mixture)."""
    mass = {}
    per_label = {}
    for h in density.hypotheses:
        for e in h.entries:
            lab = density.track_table[e].label
            mass[lab] = mass.get(lab, 0.0) + h.weight
            per_label.setdefault(lab, {})
            per_label[lab][e] = per_label[lab].get(e, 0.0) + h.weight
    tracks = []
    for lab in sorted(mass):
        comps = []
        for e, we in sorted(per_label[lab].items()):
            comps.extend(c.with_weight(c.weight * we) for c in density.track_table[e].mixture)
        tracks.append(LabeledTrack(lab, min(1.0, mass[lab]), normalize_mixture(comps, max_components)))
    return LmbDensity(tuple(tracks))


def update(density, frame: MeasurementFrame, config: FilterConfig, k: int = 0):
    """Iterated-corrector update over all sensors.

    Returns ``(posterior, AssociationProbabilities)``.
    """
    if frame.num_sensors != len(config.sensors):
        raise ValueError(f"frame has {frame.num_sensors} sensors, config has {len(config.sensors)}")
    r_as = []
    current = density
    for s, sensor in enumerate(config.sensors):
        glmb = lmb_to_glmb(current) if isinstance(current, LmbDensity) else current
        post, r_a = update_one_sensor(glmb, frame.per_sensor[s], sensor, config.update, config.prune,
                                      seed_key=(k, s))
        r_as.append(r_a)
        current = prune(glmb_to_lmb(post, config.prune.max_components), config.prune) if config.kind == "lmb" else post
    return current, AssociationProbabilities(tuple(r_as))


# ------------------------------------------------------------------ recursion

@dataclass(frozen=True, eq=False)
class FilterState:
    """Posterior at step ``k`` together with the birth LMB for step ``k + 1``."""

    density: object
    birth: LmbDensity = field(default_factory=LmbDensity)
    k: int = -1
    birth_evaluations: int = 0
    birth_updates: int = 0


def initial_state(config: FilterConfig) -> FilterState:
    density = LmbDensity() if config.kind == "lmb" else GlmbDensity((GlmbHypothesis(1.0),), ())
    return FilterState(density)


def step(state: FilterState, frame: MeasurementFrame, config: FilterConfig, k: Optional[int] = None):
    """Predict, update with every sensor, then build the birth LMB for the next step.

    Returns ``(new_state, estimates)``.
    """
    k = state.k + 1 if k is None else k
    predicted = predict(state.density, config.motion, state.birth)
    posterior, assoc = update(predicted, frame, config, k)
    birth_seed = derive_seed(config.birth.seed, k, 1_000_003) if config.birth.mode == "stochastic" else None
    birth, sampler = adaptive_birth(frame, config.sensors, assoc, config.birth, config.motion, k, birth_seed)
    birth = prune(birth, config.prune)
    estimates = extract_estimates(posterior, config.estimate_threshold)
    new_state = FilterState(posterior, birth, k, sampler.cache.entry_evaluations, sampler.uncached_entry_budget)
    return new_state, estimates


def run_filter(frames, config: FilterConfig):
    """Run the recursion over a frame sequence; returns per-step estimate lists and the final state."""
    state = initial_state(config)
    out = []
    for frame in frames:
        state, est = step(state, frame, config, frame.time)
        out.append(est)
    return out, state
