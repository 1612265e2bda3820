"""YAML scenario configuration: parsing, validation and defaults.

Unknown keys are rejected so that a typo cannot silently change an experiment.
Error messages carry the line number of the offending key when available.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from importlib import resources
from pathlib import Path

import numpy as np
import yaml

from .birth import BirthConfig
from .core import PruneConfig
from .filters import FilterConfig
from .gibbs import GibbsConfig
from .metrics import MetricConfig
from .models import BirthPrior, ConfigError, MotionModel, Scenario, SensorModel, TargetSpec


class _LineDict(dict):
    lines: dict


class _Loader(yaml.SafeLoader):
    pass


def _construct_mapping(loader, node):
    loader.flatten_mapping(node)
    out = _LineDict()
    out.lines = {}
    for key_node, value_node in node.value:
        key = loader.construct_object(key_node, deep=True)
        out[key] = loader.construct_object(value_node, deep=True)
        out.lines[key] = key_node.start_mark.line + 1
    return out


_Loader.add_constructor(yaml.resolver.BaseResolver.DEFAULT_MAPPING_TAG, _construct_mapping)


def _where(section: dict, key) -> str:
    line = getattr(section, "lines", {}).get(key)
    return f"line {line}: " if line else ""


def _check_keys(section: dict, allowed, path: str):
    if not isinstance(section, dict):
        raise ConfigError(f"{path}: expected a mapping")
    for key in section:
        if key not in allowed:
            raise ConfigError(f"{_where(section, key)}{path}.{key}: unknown key".replace(": .", ": "))


def _get(section, key, default, path, kind=float):
    if key not in section:
        return default
    try:
        return kind(section[key])
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{_where(section, key)}{path}{key}: {exc}") from exc


def _diag_or_matrix(value, n, where):
    arr = np.asarray(value, dtype=float)
    if arr.shape == (n,):
        return np.diag(arr)
    if arr.shape == (n, n):
        return arr
    raise ConfigError(f"{where}: expected {n} diagonal entries or an {n}x{n} matrix")


DEFAULT_REGION = ((-5000.0, 5000.0), (-5000.0, 5000.0))

TOP_KEYS = {"horizon", "seed", "process_noise", "region", "motion", "sensors", "targets", "birth", "filter",
            "prune", "metric", "campaign"}
SENSOR_KEYS = {"count", "detection_probability", "R", "clutter_rate", "region"}
MOTION_KEYS = {"delta_t", "accel_cov", "survival_probability"}
TARGET_KEYS = {"birth", "death", "state"}
BIRTH_KEYS = {"r_b_max", "lambda_b", "iterations", "psi_bar_cap", "prior_mean", "prior_cov", "mode", "cycling",
              "min_detections"}
FILTER_KEYS = {"kind", "update_mode", "update_iterations", "cycling", "estimate_threshold"}
PRUNE_KEYS = {"hypothesis_threshold", "max_hypotheses", "existence_threshold", "max_components"}
METRIC_KEYS = {"cutoff", "order", "window", "weight_power"}
CAMPAIGN_KEYS = {"runs", "seed", "modes"}
MODE_KEYS = {"name", "filter", "birth", "update"}


@dataclass(frozen=True)
class Mode:
    name: str
    filter: str
    birth: str
    update: str


@dataclass(frozen=True, eq=False)
class ScenarioConfig:
    scenario: Scenario
    filter: FilterConfig
    metric: MetricConfig = field(default_factory=MetricConfig)
    seed: int = 0
    runs: int = 1
    modes: tuple = ()

    def with_mode(self, mode: Mode) -> "ScenarioConfig":
        f = self.filter
        fc = replace(f, kind=mode.filter, update=replace(f.update, mode=mode.update),
                     birth=replace(f.birth, mode=mode.birth))
        return replace(self, filter=fc)

    def with_seed(self, seed: int) -> "ScenarioConfig":
        f = self.filter
        fc = replace(f, update=replace(f.update, seed=seed), birth=replace(f.birth, seed=seed))
        return replace(self, filter=fc, seed=seed)


def parse_mode(text: str, base: Mode | None = None) -> Mode:
    """Parse ``[KIND:]BIRTH/UPDATE``, e.g. ``glmb:herded/stochastic``."""
    kind = base.filter if base else "glmb"
    body = text
    if ":" in text:
        kind, body = text.split(":", 1)
    try:
        birth, upd = body.split("/")
    except ValueError as exc:
        raise ConfigError(f"mode {text!r}: expected [KIND:]BIRTH/UPDATE") from exc
    for v in (birth, upd):
        if v not in ("herded", "stochastic"):
            raise ConfigError(f"mode {text!r}: sampler must be herded or stochastic")
    if kind not in ("lmb", "glmb"):
        raise ConfigError(f"mode {text!r}: filter must be lmb or glmb")
    return Mode(f"{kind}-{birth}-{upd}", kind, birth, upd)


def _parse_region(value, where):
    try:
        (x0, x1), (y0, y1) = value
        return ((float(x0), float(x1)), (float(y0), float(y1)))
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{where}: region must be [[xmin, xmax], [ymin, ymax]]") from exc


def _parse_sensors(raw, root, region):
    if raw is None:
        raise ConfigError(f"{_where(root, 'sensors')}sensors: required")
    blocks = raw if isinstance(raw, list) else [raw]
    sensors = []
    for b in blocks:
        _check_keys(b, SENSOR_KEYS, "sensors")
        count = _get(b, "count", 1, "sensors.", int)
        for _ in range(count):
            try:
                sensors.append(SensorModel(
                    id=len(sensors) + 1,
                    R=_diag_or_matrix(b.get("R", [100.0, 100.0]), 2, "sensors.R"),
                    detection_probability=_get(b, "detection_probability", 0.95, "sensors."),
                    clutter_rate=_get(b, "clutter_rate", 15.0, "sensors."),
                    region=_parse_region(b["region"], "sensors.region") if "region" in b else region,
                ))
            except ConfigError as exc:
                raise ConfigError(f"{_where(root, 'sensors')}{exc}") from exc
    if not sensors:
        raise ConfigError(f"{_where(root, 'sensors')}sensors: required")
    return tuple(sensors)


def parse_config(data: dict) -> ScenarioConfig:
    if not isinstance(data, dict):
        raise ConfigError("config: expected a mapping at top level")
    _check_keys(data, TOP_KEYS, "")
    region = _parse_region(data["region"], "region") if "region" in data else DEFAULT_REGION
    horizon = _get(data, "horizon", 0, "", int)
    if horizon < 0:
        raise ConfigError(f"{_where(data, 'horizon')}horizon: must be >= 0")

    m = data.get("motion", {}) or {}
    _check_keys(m, MOTION_KEYS, "motion")
    motion = MotionModel(
        delta_t=_get(m, "delta_t", 1.0, "motion."),
        accel_cov=_diag_or_matrix(m.get("accel_cov", [5.0, 5.0]), 2, "motion.accel_cov"),
        survival_probability=_get(m, "survival_probability", 0.99, "motion."),
    )
    sensors = _parse_sensors(data.get("sensors"), data, region)

    targets = []
    for t in data.get("targets", []) or []:
        _check_keys(t, TARGET_KEYS, "targets")
        if "state" not in t or len(t["state"]) != 4:
            raise ConfigError(f"{_where(t, 'state') or _where(data, 'targets')}targets.state: four numbers required")
        try:
            targets.append(TargetSpec(int(t.get("birth", 0)), int(t.get("death", horizon)), t["state"]))
        except ConfigError as exc:
            raise ConfigError(f"{_where(t, 'death') or _where(data, 'targets')}{exc}") from exc
    scenario = Scenario(horizon, sensors, motion, tuple(targets), bool(data.get("process_noise", False)))

    b = data.get("birth", {}) or {}
    _check_keys(b, BIRTH_KEYS, "birth")
    prior = BirthPrior(
        np.asarray(b.get("prior_mean", [0.0, 0.0, 0.0, 0.0]), dtype=float),
        _diag_or_matrix(b.get("prior_cov", [1e10, 2500.0, 1e10, 2500.0]), 4, "birth.prior_cov"),
    )
    try:
        birth = BirthConfig(
            r_b_max=_get(b, "r_b_max", 0.1, "birth."),
            lambda_b=_get(b, "lambda_b", 2.0, "birth."),
            num_gibbs_iterations=_get(b, "iterations", 250, "birth.", int),
            psi_bar_cap=_get(b, "psi_bar_cap", 1e4, "birth."),
            prior=prior,
            mode=_get(b, "mode", "herded", "birth.", str),
            cycling=bool(b.get("cycling", True)),
            min_detections=_get(b, "min_detections", 1, "birth.", int),
        )
    except ValueError as exc:
        raise ConfigError(f"{_where(data, 'birth')}birth: {exc}") from exc
    if birth.mode not in ("herded", "stochastic"):
        raise ConfigError(f"{_where(b, 'mode')}birth.mode: must be herded or stochastic")

    f = data.get("filter", {}) or {}
    _check_keys(f, FILTER_KEYS, "filter")
    p = data.get("prune", {}) or {}
    _check_keys(p, PRUNE_KEYS, "prune")
    try:
        prune_cfg = PruneConfig(
            hypothesis_threshold=_get(p, "hypothesis_threshold", 1e-5, "prune."),
            max_hypotheses=_get(p, "max_hypotheses", 1000, "prune.", int),
            existence_threshold=_get(p, "existence_threshold", 1e-3, "prune."),
            max_components=_get(p, "max_components", 10, "prune.", int),
        )
        update = GibbsConfig(
            iterations=_get(f, "update_iterations", 250, "filter.", int),
            mode=_get(f, "update_mode", "stochastic", "filter.", str),
            cycling=bool(f.get("cycling", True)),
        )
        fcfg = FilterConfig(
            kind=_get(f, "kind", "glmb", "filter.", str),
            update=update,
            birth=birth,
            prune=prune_cfg,
            motion=motion,
            sensors=sensors,
            estimate_threshold=_get(f, "estimate_threshold", 0.5, "filter."),
        )
    except ValueError as exc:
        raise ConfigError(f"{_where(data, 'filter')}filter: {exc}") from exc

    mc = data.get("metric", {}) or {}
    _check_keys(mc, METRIC_KEYS, "metric")
    try:
        metric = MetricConfig(
            cutoff=_get(mc, "cutoff", 200.0, "metric."),
            order=_get(mc, "order", 1.0, "metric."),
            window=_get(mc, "window", 5, "metric.", int),
            weight_power=_get(mc, "weight_power", 0.0, "metric."),
        )
    except ValueError as exc:
        raise ConfigError(f"{_where(data, 'metric')}metric: {exc}") from exc

    c = data.get("campaign", {}) or {}
    _check_keys(c, CAMPAIGN_KEYS, "campaign")
    modes = []
    for md in c.get("modes", []) or []:
        _check_keys(md, MODE_KEYS, "campaign.modes")
        mode = parse_mode(f"{md.get('filter', fcfg.kind)}:{md.get('birth', birth.mode)}/{md.get('update', update.mode)}")
        modes.append(Mode(str(md.get("name", mode.name)), mode.filter, mode.birth, mode.update))
    if not modes:
        modes.append(Mode(f"{fcfg.kind}-{birth.mode}-{update.mode}", fcfg.kind, birth.mode, update.mode))
    runs = _get(c, "runs", 1, "campaign.", int)
    seed = _get(data, "seed", _get(c, "seed", 0, "campaign.", int), "", int)
    cfg = ScenarioConfig(scenario, fcfg, metric, seed, runs, tuple(modes))
    return cfg.with_seed(seed)


def load_config(path) -> ScenarioConfig:
    text = Path(path).read_text()
    try:
        data = yaml.load(text, Loader=_Loader)
    except yaml.YAMLError as exc:
        raise ConfigError(f"invalid YAML: {exc}") from exc
    return parse_config(data if data is not None else {})


def shipped_config_path(name: str) -> Path:
    """Path of a bundled scenario (``default`` or ``desk``)."""
    return Path(str(resources.files("herdtrack") / "scenarios" / f"{name}.yaml"))


def load_shipped(name: str) -> ScenarioConfig:
    return load_config(shipped_config_path(name))
