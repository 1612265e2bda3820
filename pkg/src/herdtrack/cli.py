"""Command-line interface: ``herdtrack {simulate,track,campaign,metrics}``.

Exit codes: 0 success, 1 some campaign runs failed, 2 invalid input.
Set ``RFS_LOG`` (e.g. ``DEBUG``) to change the log level.
"""
from __future__ import annotations

import argparse
import csv
import logging
import os
import sys
from pathlib import Path

from .campaign import records_for, run_campaign, track, write_outputs
from .config import ScenarioConfig, load_config, parse_mode, shipped_config_path
from .core import RFSError
from .io import (
    FormatError,
    read_estimates,
    read_measurements,
    read_truth,
    truth_trajectories,
    write_estimates,
    write_measurements,
    write_truth,
)
from .metrics import ospa2_series, trajectories_from_estimates
from .models import ConfigError, simulate

log = logging.getLogger("herdtrack")


class UsageError(Exception):
    pass


def _load(path: str) -> ScenarioConfig:
    p = Path(path)
    if not p.exists() and not p.suffix:
        shipped = shipped_config_path(path)
        if shipped.exists():
            p = shipped
    if not p.exists():
        raise UsageError(f"config file not found: {path}")
    return load_config(p)


def _apply_overrides(cfg: ScenarioConfig, args) -> ScenarioConfig:
    if getattr(args, "seed", None) is not None:
        cfg = cfg.with_seed(args.seed)
    modes = getattr(args, "mode", None)
    if modes and len(modes) == 1 and args.command == "track":
        cfg = cfg.with_mode(parse_mode(modes[0], cfg.modes[0] if cfg.modes else None))
    return cfg


def cmd_simulate(args) -> int:
    cfg = _apply_overrides(_load(args.config), args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    truth, frames = simulate(cfg.scenario, cfg.seed)
    write_truth(out / "truth.txt", truth, len(cfg.scenario.targets))
    write_measurements(out / "measurements.txt", frames, len(cfg.scenario.sensors), cfg.scenario.horizon)
    log.info("wrote %d frames to %s", len(frames), out)
    return 0


def cmd_track(args) -> int:
    cfg = _apply_overrides(_load(args.config), args)
    frames = read_measurements(args.measurements)
    if frames and frames[0].num_sensors != len(cfg.filter.sensors):
        raise UsageError(f"measurements have {frames[0].num_sensors} sensors, config has {len(cfg.filter.sensors)}")
    truth = read_truth(args.truth) if args.truth else None
    if truth is not None and len(truth) != len(frames):
        raise UsageError(f"truth horizon {len(truth)} differs from measurement horizon {len(frames)}")
    estimates, clock = track(frames, cfg)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_estimates(out / "estimates.txt", estimates)
    recs = records_for(0, cfg.seed, truth, estimates, clock, cfg)
    with open(out / "records.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("run", "seed", "step", "ospa2", "truth_card", "est_card", "wall_clock"))
        for r in recs:
            w.writerow([r.run, r.seed, r.step, repr(r.ospa2), r.truth_card, r.est_card, "%.6f" % r.wall_clock])
    return 0


def cmd_campaign(args) -> int:
    cfg = _apply_overrides(_load(args.config), args)
    modes = [parse_mode(m) for m in args.mode] if args.mode else None
    results, failures = run_campaign(cfg, modes, args.runs, args.workers)
    write_outputs(args.out, results, cfg, svg=not args.no_svg)
    for name, run, err in failures:
        print(f"run failed: mode={name} run={run}: {err}", file=sys.stderr)
    return 1 if failures else 0


def cmd_metrics(args) -> int:
    cfg = _load(args.config)
    truth = read_truth(args.truth)
    estimates = read_estimates(args.estimates)
    horizon = max(len(truth), len(estimates))
    truth = truth + [dict()] * (horizon - len(truth))
    estimates = estimates + [[]] * (horizon - len(estimates))
    series = ospa2_series(truth_trajectories(truth), trajectories_from_estimates(estimates), horizon, cfg.metric)
    fh = open(args.out, "w", newline="") if args.out else sys.stdout
    try:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("step", "ospa2", "truth_card", "est_card"))
        for k, v in enumerate(series):
            w.writerow([k, repr(float(v)), len(truth[k]), len(estimates[k])])
    finally:
        if args.out:
            fh.close()
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="herdtrack", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, out_help):
        sp.add_argument("--config", required=True, help="YAML config path, or 'default' / 'desk'")
        sp.add_argument("--out", required=True, help=out_help)

    sp = sub.add_parser("simulate", help="write truth.txt and measurements.txt")
    common(sp, "output directory")
    sp.add_argument("--seed", type=int)
    sp.set_defaults(func=cmd_simulate)

    sp = sub.add_parser("track", help="run the filter over a measurement file")
    common(sp, "output directory")
    sp.add_argument("--measurements", required=True)
    sp.add_argument("--truth", help="truth file; enables OSPA(2) in records.csv")
    sp.add_argument("--seed", type=int)
    sp.add_argument("--mode", action="append", help="[KIND:]BIRTH/UPDATE, e.g. glmb:herded/herded")
    sp.set_defaults(func=cmd_track)

    sp = sub.add_parser("campaign", help="Monte Carlo comparison of sampler modes")
    common(sp, "output directory")
    sp.add_argument("--seed", type=int, help="base seed; run i uses base + i")
    sp.add_argument("--runs", type=int)
    sp.add_argument("--workers", type=int, default=1)
    sp.add_argument("--mode", action="append", help="[KIND:]BIRTH/UPDATE; repeat for several modes")
    sp.add_argument("--no-svg", action="store_true")
    sp.set_defaults(func=cmd_campaign)

    sp = sub.add_parser("metrics", help="OSPA(2) per step from truth and estimate files")
    sp.add_argument("--config", required=True)
    sp.add_argument("--truth", required=True)
    sp.add_argument("--estimates", required=True)
    sp.add_argument("--out", help="CSV path (default: stdout)")
    sp.set_defaults(func=cmd_metrics)
    return p


def main(argv=None) -> int:
    logging.basicConfig(level=os.environ.get("RFS_LOG", "WARNING").upper(),
                        format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, FormatError, UsageError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (RFSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
