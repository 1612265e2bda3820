"""Labeled RFS data structures: Gaussian mixtures, LMB and delta-GLMB densities.

All objects here are treated as immutable values once built.  Numpy arrays
stored on them are marked read-only.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence, Union

import numpy as np


class RFSError(Exception):
    """Base class for errors raised by this package."""


class DegenerateDensityError(RFSError):
    """All hypothesis weights are zero, so the density cannot be normalized."""


class LabelCollisionError(RFSError):
    """Two tracks in the same density share a label."""


def _frozen(a, ndim: int) -> np.ndarray:
    arr = np.array(a, dtype=float)
    if arr.ndim != ndim:
        raise ValueError(f"expected a {ndim}-d array, got shape {arr.shape}")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, order=True)
class Label:
    """Track label: birth step plus an origin.

    ``origin`` is a tuple of ints.  For adaptive births it is the measurement
    tuple that spawned the track; for truth or static births a single index.
    """

    birth_time: int
    origin: tuple = ()

    def __post_init__(self):
        origin = self.origin
        if isinstance(origin, (int, np.integer)):
            origin = (int(origin),)
        object.__setattr__(self, "birth_time", int(self.birth_time))
        object.__setattr__(self, "origin", tuple(int(o) for o in origin))

    def __str__(self):
        return f"{self.birth_time}:" + "-".join(str(o) for o in self.origin)

    @classmethod
    def parse(cls, text: str) -> "Label":
        k, _, rest = text.partition(":")
        origin = tuple(int(o) for o in rest.split("-")) if rest else ()
        return cls(int(k), origin)


@dataclass(frozen=True, eq=False)
class GaussianComponent:
    weight: float
    mean: np.ndarray
    covariance: np.ndarray

    def __post_init__(self):
        if self.weight < 0:
            raise ValueError("component weight must be nonnegative")
        object.__setattr__(self, "weight", float(self.weight))
        object.__setattr__(self, "mean", _frozen(self.mean, 1))
        object.__setattr__(self, "covariance", _frozen(self.covariance, 2))

    def with_weight(self, weight: float) -> "GaussianComponent":
        return GaussianComponent(weight, self.mean, self.covariance)


Mixture = tuple  # tuple[GaussianComponent, ...]


def normalize_mixture(components: Sequence[GaussianComponent], max_components: int | None = None) -> Mixture:
    """Keep the heaviest ``max_components`` components and rescale weights to sum to one."""
    comps = list(components)
    if not comps:
        raise ValueError("empty mixture")
    if max_components is not None and len(comps) > max_components:
        order = sorted(range(len(comps)), key=lambda i: (-comps[i].weight, i))
        comps = [comps[i] for i in sorted(order[:max_components])]
    total = sum(c.weight for c in comps)
    if not total > 0:
        raise ValueError("mixture weights sum to zero")
    return tuple(c.with_weight(c.weight / total) for c in comps)


def mixture_mean(mixture: Sequence[GaussianComponent]) -> np.ndarray:
    total = sum(c.weight for c in mixture)
    return sum(c.weight * c.mean for c in mixture) / total


@dataclass(frozen=True, eq=False)
class LabeledTrack:
    label: Label
    existence: float
    mixture: Mixture

    def __post_init__(self):
        if not 0.0 <= self.existence <= 1.0:
            raise ValueError(f"existence {self.existence} outside [0, 1]")
        object.__setattr__(self, "mixture", tuple(self.mixture))

    @property
    def mean(self) -> np.ndarray:
        return mixture_mean(self.mixture)


def _check_unique(labels):
    seen = set()
    for lab in labels:
        if lab in seen:
            raise LabelCollisionError(f"duplicate label {lab}")
        seen.add(lab)


@dataclass(frozen=True, eq=False)
class LmbDensity:
    """Labeled multi-Bernoulli density.  Tracks are kept sorted by label."""

    tracks: tuple = ()

    def __post_init__(self):
        tracks = tuple(sorted(self.tracks, key=lambda t: t.label))
        _check_unique(t.label for t in tracks)
        object.__setattr__(self, "tracks", tracks)

    def __len__(self):
        return len(self.tracks)

    @property
    def labels(self) -> tuple:
        return tuple(t.label for t in self.tracks)


@dataclass(frozen=True, eq=False)
class TrackEntry:
    """One row of a GLMB track table: a label with a density conditioned on
    a particular association history (one column index per sensor update,
    0 = miss)."""

    label: Label
    mixture: Mixture
    history: tuple = ()


@dataclass(frozen=True, eq=False)
class GlmbHypothesis:
    """Weighted hypothesis over track-table entries.

    ``existences`` holds the per-entry probability that the entry is present.
    After a measurement update every value is 1 (a plain delta-GLMB term);
    right after prediction survivors carry p_s and births carry their birth
    probability, which lets one hypothesis stand for the whole product of
    independent survival/birth events.  ``associations`` records the column
    each entry took in the most recent sensor update (-1 when unknown).
    """

    weight: float
    entries: tuple = ()
    existences: tuple = ()
    associations: tuple = ()

    def __post_init__(self):
        entries = tuple(int(e) for e in self.entries)
        exist = tuple(float(r) for r in self.existences) if self.existences else (1.0,) * len(entries)
        assoc = tuple(int(a) for a in self.associations) if self.associations else (-1,) * len(entries)
        if not (len(entries) == len(exist) == len(assoc)):
            raise ValueError("entries, existences and associations must align")
        object.__setattr__(self, "weight", float(self.weight))
        object.__setattr__(self, "entries", entries)
        object.__setattr__(self, "existences", exist)
        object.__setattr__(self, "associations", assoc)

    @property
    def cardinality(self) -> int:
        return len(self.entries)


@dataclass(frozen=True, eq=False)
class GlmbDensity:
    hypotheses: tuple = ()
    track_table: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "hypotheses", tuple(self.hypotheses))
        object.__setattr__(self, "track_table", tuple(self.track_table))
        n = len(self.track_table)
        for h in self.hypotheses:
            if any(e < 0 or e >= n for e in h.entries):
                raise ValueError("hypothesis references a missing track-table entry")
            _check_unique(self.track_table[e].label for e in h.entries)

    def label_set(self, hypothesis: GlmbHypothesis) -> frozenset:
        return frozenset(self.track_table[e].label for e in hypothesis.entries)

    @property
    def weights(self) -> np.ndarray:
        return np.array([h.weight for h in self.hypotheses], dtype=float)

    def cardinality_distribution(self) -> np.ndarray:
        """Cardinality pmf, valid for updated densities (all existences 1)."""
        if not self.hypotheses:
            return np.ones(1)
        nmax = max(h.cardinality for h in self.hypotheses)
        pmf = np.zeros(nmax + 1)
        for h in self.hypotheses:
            pmf[h.cardinality] += h.weight
        return pmf / pmf.sum()


Density = Union[GlmbDensity, LmbDensity]


@dataclass(frozen=True)
class PruneConfig:
    hypothesis_threshold: float = 1e-5
    max_hypotheses: int = 1000
    existence_threshold: float = 1e-3
    max_components: int = 10


def empty_glmb() -> GlmbDensity:
    return GlmbDensity(hypotheses=(GlmbHypothesis(1.0),), track_table=())


def normalize_hypotheses(density: GlmbDensity) -> GlmbDensity:
    w = density.weights
    total = w.sum()
    if w.size == 0 or not total > 0:
        raise DegenerateDensityError("hypothesis weights sum to zero")
    hyps = tuple(
        GlmbHypothesis(h.weight / total, h.entries, h.existences, h.associations) for h in density.hypotheses
    )
    return GlmbDensity(hyps, density.track_table)


def _compact_table(hypotheses, table, max_components):
    """Drop unreferenced track-table entries and renumber the rest."""
    used = sorted({e for h in hypotheses for e in h.entries})
    remap = {old: new for new, old in enumerate(used)}
    new_table = []
    for old in used:
        entry = table[old]
        mix = entry.mixture
        if max_components is not None and len(mix) > max_components:
            mix = normalize_mixture(mix, max_components)
        new_table.append(TrackEntry(entry.label, mix, entry.history))
    new_hyps = []
    for h in hypotheses:
        order = sorted(range(len(h.entries)), key=lambda i: table[h.entries[i]].label)
        new_hyps.append(
            GlmbHypothesis(
                h.weight,
                tuple(remap[h.entries[i]] for i in order),
                tuple(h.existences[i] for i in order),
                tuple(h.associations[i] for i in order),
            )
        )
    return tuple(new_hyps), tuple(new_table)


def prune(density: Density, config: PruneConfig = PruneConfig()) -> Density:
    """Threshold, cap and renormalize.

    GLMB hypotheses are ranked by descending weight with the original index as
    tie-break, so the surviving set is deterministic.  If every hypothesis falls
    below the threshold the best one is kept.  LMB tracks are filtered on
    existence and their mixtures capped.
    """
    if isinstance(density, LmbDensity):
        kept = []
        for t in density.tracks:
            if t.existence < config.existence_threshold:
                continue
            mix = t.mixture
            if len(mix) > config.max_components:
                mix = normalize_mixture(mix, config.max_components)
            kept.append(LabeledTrack(t.label, t.existence, mix))
        return LmbDensity(tuple(kept))

    hyps = density.hypotheses
    if not hyps:
        return density
    total = sum(h.weight for h in hyps)
    if not total > 0:
        raise DegenerateDensityError("hypothesis weights sum to zero")
    order = sorted(range(len(hyps)), key=lambda i: (-hyps[i].weight, i))
    keep = [i for i in order if hyps[i].weight / total >= config.hypothesis_threshold]
    if not keep:
        keep = order[:1]
    keep = keep[: config.max_hypotheses]
    kept_hyps, table = _compact_table([hyps[i] for i in keep], density.track_table, config.max_components)
    return normalize_hypotheses(GlmbDensity(kept_hyps, table))


def extract_estimates(density: Density, existence_threshold: float = 0.5) -> list:
    """Labeled state estimates as a list of ``(label, mean)`` sorted by label.

    LMB: every track with existence above the threshold.  GLMB: maximum a
    posteriori cardinality, then the heaviest hypothesis of that cardinality
    (lowest index on ties).
    """
    if isinstance(density, LmbDensity):
        return [(t.label, t.mean) for t in density.tracks if t.existence > existence_threshold]

    if not density.hypotheses:
        return []
    card = int(np.argmax(density.cardinality_distribution()))
    best = None
    for i, h in enumerate(density.hypotheses):
        if h.cardinality == card and (best is None or h.weight > density.hypotheses[best].weight):
            best = i
    hyp = density.hypotheses[best]
    out = [(density.track_table[e].label, mixture_mean(density.track_table[e].mixture)) for e in hyp.entries]
    return sorted(out, key=lambda item: item[0])
