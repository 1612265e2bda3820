"""Single runs and Monte Carlo campaigns over sampler modes."""
from __future__ import annotations

import csv
import logging
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .config import Mode, ScenarioConfig
from .filters import initial_state, step
from .io import truth_trajectories
from .metrics import ospa2_series, trajectories_from_estimates
from .models import simulate

log = logging.getLogger(__name__)

CSV_COLUMNS = ("mode", "run", "step", "ospa2", "truth_card", "est_card")


@dataclass
class RunRecord:
    run: int
    seed: int
    step: int
    ospa2: float
    truth_card: int
    est_card: int
    wall_clock: float


def track(frames, cfg: ScenarioConfig):
    """Run the configured filter.  Returns ``(estimates per step, seconds per step)``."""
    state = initial_state(cfg.filter)
    estimates, clock = [], []
    for frame in frames:
        t0 = time.perf_counter()
        state, est = step(state, frame, cfg.filter, frame.time)
        clock.append(time.perf_counter() - t0)
        estimates.append(est)
    return estimates, clock


def evaluate(truth, estimates, cfg: ScenarioConfig) -> np.ndarray:
    return ospa2_series(truth_trajectories(truth), trajectories_from_estimates(estimates), len(estimates), cfg.metric)


def records_for(run: int, seed: int, truth, estimates, clock, cfg: ScenarioConfig) -> list:
    series = evaluate(truth, estimates, cfg) if truth is not None else np.full(len(estimates), np.nan)
    return [
        RunRecord(run, seed, k, float(series[k]), len(truth[k]) if truth is not None else -1, len(estimates[k]),
                  clock[k])
        for k in range(len(estimates))
    ]


def run_single(cfg: ScenarioConfig, run: int, seed: int) -> list:
    """Simulate with ``seed`` and track with filter seeds derived from it."""
    cfg = cfg.with_seed(seed)
    truth, frames = simulate(cfg.scenario, seed)
    estimates, clock = track(frames, cfg)
    return records_for(run, seed, truth, estimates, clock, cfg)


def _job(args):
    cfg, mode, run, seed = args
    try:
        return mode.name, run, run_single(cfg.with_mode(mode), run, seed), None
    except Exception as exc:  # noqa: BLE001 - a failed replicate must not stop the campaign
        return mode.name, run, None, f"{type(exc).__name__}: {exc}"


def _unique_names(modes):
    """Suffix repeated mode names (``a``, ``a#2``) so every mode keeps its own rows."""
    seen, out = {}, []
    for m in modes:
        n = seen[m.name] = seen.get(m.name, 0) + 1
        out.append(m if n == 1 else replace(m, name=f"{m.name}#{n}"))
    return tuple(out)


def run_campaign(cfg: ScenarioConfig, modes=None, runs=None, workers: int = 1):
    """Run every (mode, run) pair.  Returns ``(results, failures)``.

    ``results`` maps mode name to ``{run: [RunRecord, ...]}`` in run order.
    Output does not depend on ``workers``.
    """
    modes = _unique_names(tuple(modes or cfg.modes))
    runs = cfg.runs if runs is None else runs
    jobs = [(cfg, mode, r, cfg.seed + r) for mode in modes for r in range(runs)]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            outcomes = list(pool.map(_job, jobs))
    else:
        outcomes = [_job(j) for j in jobs]
    results = {m.name: {} for m in modes}
    failures = []
    for name, run, recs, err in outcomes:
        if err is not None:
            log.error("mode %s run %d failed: %s", name, run, err)
            failures.append((name, run, err))
        else:
            results[name][run] = recs
    return results, failures


def mean_series(results: dict) -> dict:
    """Per-mode, per-step mean OSPA(2) over successful runs."""
    out = {}
    for name, by_run in results.items():
        if not by_run:
            out[name] = np.zeros(0)
            continue
        mat = np.array([[r.ospa2 for r in recs] for _, recs in sorted(by_run.items())])
        out[name] = mat.mean(axis=0)
    return out


def write_campaign_csv(path, results: dict):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        for name, by_run in results.items():
            for run, recs in sorted(by_run.items()):
                for r in recs:
                    w.writerow([name, run, r.step, repr(r.ospa2), r.truth_card, r.est_card])


def write_summary_csv(path, results: dict):
    means = mean_series(results)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("mode", "step", "mean_ospa2", "runs"))
        for name, series in means.items():
            for k, v in enumerate(series):
                w.writerow([name, k, repr(float(v)), len(results[name])])


def write_timing_csv(path, results: dict):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("mode", "run", "seed", "step", "wall_clock"))
        for name, by_run in results.items():
            for run, recs in sorted(by_run.items()):
                for r in recs:
                    w.writerow([name, run, r.seed, r.step, "%.6f" % r.wall_clock])


_COLORS = ("#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f")


def svg_plot(series: dict, cutoff: float, title: str = "mean OSPA(2)", width: int = 640, height: int = 360) -> str:
    """Line plot of one series per mode as a standalone SVG string."""
    left, right, top, bottom = 50, 170, 30, 40
    pw, ph = width - left - right, height - top - bottom
    n = max((len(s) for s in series.values()), default=1)
    ymax = cutoff

    def xy(k, v):
        x = left + (pw * k / max(n - 1, 1))
        y = top + ph * (1.0 - min(v, ymax) / ymax)
        return f"{x:.1f},{y:.1f}"

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}">',
        f'<text x="{left}" y="18" font-family="sans-serif" font-size="13">{title}</text>',
        f'<rect x="{left}" y="{top}" width="{pw}" height="{ph}" fill="none" stroke="#444"/>',
        f'<text x="{left}" y="{height - 12}" font-family="sans-serif" font-size="11">step 0..{n - 1}</text>',
        f'<text x="4" y="{top + 10}" font-family="sans-serif" font-size="11">{ymax:g}</text>',
        f'<text x="4" y="{top + ph}" font-family="sans-serif" font-size="11">0</text>',
    ]
    for i, (name, s) in enumerate(series.items()):
        color = _COLORS[i % len(_COLORS)]
        pts = " ".join(xy(k, v) for k, v in enumerate(s))
        parts.append(f'<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{pts}"/>')
        ly = top + 14 * (i + 1)
        parts.append(f'<line x1="{left + pw + 10}" y1="{ly - 4}" x2="{left + pw + 30}" y2="{ly - 4}" stroke="{color}"/>')
        parts.append(f'<text x="{left + pw + 34}" y="{ly}" font-family="sans-serif" font-size="11">{name}</text>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def write_outputs(out_dir, results: dict, cfg: ScenarioConfig, svg: bool = True):
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_campaign_csv(out / "campaign.csv", results)
    write_summary_csv(out / "summary.csv", results)
    write_timing_csv(out / "timing.csv", results)
    if svg:
        (out / "ospa2.svg").write_text(svg_plot(mean_series(results), cfg.metric.cutoff))
