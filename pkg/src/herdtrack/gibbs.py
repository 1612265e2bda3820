"""Herded and stochastic Gibbs sampling over discrete product spaces.

The sampler is generic: a state is a tuple of ints, one per coordinate, and a
caller-supplied ``evaluator(state, coord)`` returns the conditional pmf of
``state[coord]`` given the other coordinates.  The value currently held at
``coord`` must not influence the result.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Hashable, Optional

import numpy as np

from .core import RFSError
from .models import make_rng

Evaluator = Callable[[tuple, int], np.ndarray]


class SamplerError(RFSError):
    """The conditional evaluator failed or returned an invalid pmf."""

    def __init__(self, message, state=None, coord=None):
        super().__init__(f"{message} (state={state}, coordinate={coord})")
        self.state = state
        self.coord = coord


@dataclass(frozen=True)
class GibbsConfig:
    iterations: int = 250
    mode: str = "herded"
    seed: int = 0
    cycling: bool = True

    def __post_init__(self):
        if self.iterations < 1:
            raise ValueError("iterations must be >= 1")
        if self.mode not in ("herded", "stochastic"):
            raise ValueError(f"unknown sampler mode {self.mode!r}")


def herding_step(weights: np.ndarray, mu: np.ndarray):
    """One herding update with indicator features.

    Picks the argmax of ``weights`` (lowest index wins ties), then returns the
    weights moved by ``mu`` minus the indicator of the pick.
    """
    weights = np.asarray(weights, dtype=float)
    if weights.size == 0:
        raise ValueError("herding_step needs a non-empty weight vector")
    idx = int(np.argmax(weights))
    new = weights + mu
    new[idx] -= 1.0
    return idx, new


def perm(t: int, V: int) -> tuple:
    """The ``(t - 1) mod V!``-th permutation of ``range(V)`` in lexicographic order.

    ``t = 1`` is the identity.  Coordinates are 0-based.
    """
    if V < 1:
        raise ValueError("V must be >= 1")
    rank = (t - 1) % math.factorial(V)
    pool = list(range(V))
    out = []
    for pos in range(V - 1, -1, -1):
        f = math.factorial(pos)
        i, rank = divmod(rank, f)
        out.append(pool.pop(i))
    return tuple(out)


def next_permutation(p: tuple) -> tuple:
    """Lexicographic successor of ``p``; wraps the last permutation to the identity."""
    a = list(p)
    i = len(a) - 2
    while i >= 0 and a[i] >= a[i + 1]:
        i -= 1
    if i < 0:
        return tuple(sorted(a))
    j = len(a) - 1
    while a[j] <= a[i]:
        j -= 1
    a[i], a[j] = a[j], a[i]
    a[i + 1:] = reversed(a[i + 1:])
    return tuple(a)


def _conditioning_key(state: tuple, coord: int) -> Hashable:
    return (state[:coord] + state[coord + 1:], coord)


class WeightStore:
    """Herding weight vectors keyed by (conditioning state, coordinate)."""

    def __init__(self):
        self._w = {}

    def __contains__(self, key):
        return key in self._w

    def __len__(self):
        return len(self._w)

    def get(self, key, mu: np.ndarray) -> np.ndarray:
        w = self._w.get(key)
        if w is None:
            w = np.array(mu, dtype=float)
            self._w[key] = w
        return w

    def __setitem__(self, key, w):
        self._w[key] = w

    def __getitem__(self, key):
        return self._w[key]


class ConditionalCache:
    """Memo of conditional pmfs keyed like :class:`WeightStore`.

    ``evaluations`` counts evaluator calls and ``entry_evaluations`` the total
    length of the pmfs they produced.
    """

    def __init__(self, evaluator: Evaluator, enabled: bool = True):
        self.evaluator = evaluator
        self.enabled = enabled
        self._m = {}
        self.evaluations = 0
        self.entry_evaluations = 0
        self.hits = 0

    def __len__(self):
        return len(self._m)

    def __call__(self, state: tuple, coord: int) -> np.ndarray:
        key = _conditioning_key(state, coord)
        if self.enabled:
            mu = self._m.get(key)
            if mu is not None:
                self.hits += 1
                return mu
        try:
            mu = np.asarray(self.evaluator(state, coord), dtype=float)
        except SamplerError:
            raise
        except Exception as exc:
            raise SamplerError(f"evaluator failed: {exc}", state, coord) from exc
        self.evaluations += 1
        self.entry_evaluations += mu.size
        total = mu.sum() if mu.size else 0.0
        if mu.ndim != 1 or mu.size == 0 or not np.all(np.isfinite(mu)) or np.any(mu < 0) or not total > 0:
            raise SamplerError("evaluator returned an invalid conditional", state, coord)
        mu = mu / total
        mu.setflags(write=False)
        if self.enabled:
            self._m[key] = mu
        return mu

    def prewarm(self, state: tuple, coord: int):
        self(state, coord)


class GibbsSampler:
    """Single-chain Gibbs sampler.  One instance per chain; not thread-safe."""

    def __init__(self, evaluator: Evaluator, config: GibbsConfig = GibbsConfig(), cache: Optional[ConditionalCache] = None):
        self.config = config
        self.cache = cache if cache is not None else ConditionalCache(evaluator)
        self.weights = WeightStore()
        self.coordinate_updates = 0
        self.uncached_entry_budget = 0

    def run(self, initial_state) -> list:
        """Run ``config.iterations`` full sweeps from ``initial_state``.

        Returns the distinct states reached after each coordinate update, in
        first-visit order.  The starting state is only included if the chain
        returns to it.
        """
        cfg = self.config
        state = tuple(int(v) for v in initial_state)
        V = len(state)
        if V == 0:
            return []
        rng = make_rng(cfg.seed) if cfg.mode == "stochastic" else None
        herded = cfg.mode == "herded"
        order = tuple(range(V))
        visited = {}
        for t in range(1, cfg.iterations + 1):
            if cfg.cycling and t > 1:
                order = next_permutation(order)
            for s in order:
                mu = self.cache(state, s)
                self.coordinate_updates += 1
                self.uncached_entry_budget += mu.size
                if herded:
                    key = _conditioning_key(state, s)
                    w = self.weights.get(key, mu)
                    j, w = herding_step(w, mu)
                    self.weights[key] = w
                else:
                    j = int(np.searchsorted(np.cumsum(mu), rng.random() * mu.sum(), side="right"))
                    j = min(j, mu.size - 1)
                if j != state[s]:
                    state = state[:s] + (j,) + state[s + 1:]
                visited.setdefault(state, None)
        return list(visited)


def sample_chain(evaluator: Evaluator, initial_state, config: GibbsConfig = GibbsConfig(),
                 cache: Optional[ConditionalCache] = None) -> list:
    return GibbsSampler(evaluator, config, cache).run(initial_state)
