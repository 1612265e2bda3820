"""Plain-text truth, measurement and estimate files.

Every file starts with one header line, followed by one whitespace-separated
record per line.  Floats use ``%.9g`` so output is byte-stable across runs.

measurements::

    measurements V=2 horizon=40
    <step> <sensor 1..V> <x> <y>

truth::

    truth targets=5 horizon=40
    <step> <target> <px> <vx> <py> <vy>

estimates::

    estimates horizon=40
    <step> <label> <px> <vx> <py> <vy>
"""
from __future__ import annotations

from pathlib import Path

import numpy as np

from .core import Label
from .models import ConfigError, MeasurementFrame


class FormatError(ConfigError):
    """Malformed data file."""


def _f(x) -> str:
    return "%.9g" % x


def _header(line: str, kind: str, path) -> dict:
    parts = line.split()
    if not parts or parts[0] != kind:
        raise FormatError(f"{path}: line 1: expected a '{kind}' header")
    out = {}
    for item in parts[1:]:
        key, _, val = item.partition("=")
        try:
            out[key] = int(val)
        except ValueError as exc:
            raise FormatError(f"{path}: line 1: bad header field {item!r}") from exc
    return out


def format_measurements(frames, num_sensors: int, horizon: int | None = None) -> str:
    horizon = len(frames) if horizon is None else horizon
    lines = [f"measurements V={num_sensors} horizon={horizon}"]
    for fr in frames:
        for s, Z in enumerate(fr.per_sensor):
            for z in Z:
                lines.append(f"{fr.time} {s + 1} {_f(z[0])} {_f(z[1])}")
    return "\n".join(lines) + "\n"


def write_measurements(path, frames, num_sensors: int, horizon: int | None = None):
    Path(path).write_text(format_measurements(frames, num_sensors, horizon))


def read_measurements(path) -> list:
    text = Path(path).read_text().splitlines()
    if not text:
        raise FormatError(f"{path}: empty file")
    head = _header(text[0], "measurements", path)
    V, horizon = head.get("V"), head.get("horizon")
    if V is None or horizon is None:
        raise FormatError(f"{path}: line 1: header needs V and horizon")
    data = [[[] for _ in range(V)] for _ in range(horizon)]
    for n, line in enumerate(text[1:], start=2):
        if not line.strip():
            continue
        parts = line.split()
        try:
            k, s, x, y = int(parts[0]), int(parts[1]), float(parts[2]), float(parts[3])
        except (ValueError, IndexError) as exc:
            raise FormatError(f"{path}: line {n}: expected '<step> <sensor> <x> <y>'") from exc
        if not 0 <= k < horizon or not 1 <= s <= V:
            raise FormatError(f"{path}: line {n}: step or sensor out of range")
        data[k][s - 1].append((x, y))
    return [MeasurementFrame(k, tuple(np.array(z).reshape(-1, 2) for z in data[k])) for k in range(horizon)]


def format_truth(truth, num_targets: int) -> str:
    lines = [f"truth targets={num_targets} horizon={len(truth)}"]
    for k, alive in enumerate(truth):
        for idx in sorted(alive):
            x = alive[idx]
            lines.append(f"{k} {idx} " + " ".join(_f(v) for v in x))
    return "\n".join(lines) + "\n"


def write_truth(path, truth, num_targets: int):
    Path(path).write_text(format_truth(truth, num_targets))


def read_truth(path) -> list:
    text = Path(path).read_text().splitlines()
    if not text:
        raise FormatError(f"{path}: empty file")
    head = _header(text[0], "truth", path)
    truth = [dict() for _ in range(head.get("horizon", 0))]
    for n, line in enumerate(text[1:], start=2):
        if not line.strip():
            continue
        parts = line.split()
        try:
            truth[int(parts[0])][int(parts[1])] = np.array([float(v) for v in parts[2:6]])
        except (ValueError, IndexError) as exc:
            raise FormatError(f"{path}: line {n}: malformed truth record") from exc
    return truth


def format_estimates(estimates_per_step) -> str:
    lines = [f"estimates horizon={len(estimates_per_step)}"]
    for k, est in enumerate(estimates_per_step):
        for label, x in est:
            lines.append(f"{k} {label} " + " ".join(_f(v) for v in x))
    return "\n".join(lines) + "\n"


def write_estimates(path, estimates_per_step):
    Path(path).write_text(format_estimates(estimates_per_step))


def read_estimates(path) -> list:
    text = Path(path).read_text().splitlines()
    if not text:
        raise FormatError(f"{path}: empty file")
    head = _header(text[0], "estimates", path)
    out = [[] for _ in range(head.get("horizon", 0))]
    for n, line in enumerate(text[1:], start=2):
        if not line.strip():
            continue
        parts = line.split()
        try:
            out[int(parts[0])].append((Label.parse(parts[1]), np.array([float(v) for v in parts[2:6]])))
        except (ValueError, IndexError) as exc:
            raise FormatError(f"{path}: line {n}: malformed estimate record") from exc
    return out


def truth_trajectories(truth, positions=(0, 2)) -> dict:
    """``{target: {step: position}}`` from per-step truth dictionaries."""
    out = {}
    for k, alive in enumerate(truth):
        for idx, x in alive.items():
            out.setdefault(idx, {})[k] = np.asarray(x, dtype=float)[list(positions)]
    return out
