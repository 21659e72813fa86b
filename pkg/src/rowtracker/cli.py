"""Command-line entry point: ``rowtracker {simulate,track,map,sweep}``."""

from __future__ import annotations

import argparse
import logging
import os
import sys
from dataclasses import replace

from .dataset import load_dataset, save_dataset
from .errors import RowTrackerError, UsageError
from .evaluation import sweep
from .geom import Calibration, parse_calibration
from .rowmap import MapConfig, atomic_write, build_map, write_ply
from .sim import NoiseSpec, SimulatedRow, generate_scene, parse_scene
from .track import VARIANTS, TrackerConfig, count_row, parse_tracker_config

log = logging.getLogger("rowtracker")

LOG_LEVELS = {"error": logging.ERROR, "warning": logging.WARNING, "info": logging.INFO, "debug": logging.DEBUG}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _read(path):
    try:
        with open(path, encoding="utf-8") as fh:
            return fh.read()
    except OSError as exc:
        raise UsageError(f"cannot read {path}: {exc.strerror}") from None


def _floats(text):
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise UsageError(f"expected comma-separated numbers, got {text!r}") from None


def build_parser():
    p = _Parser(prog="rowtracker", description="Fruit counting and row mapping for rail-borne RGB-D surveys.")
    sub = p.add_subparsers(dest="command", metavar="COMMAND", parser_class=_Parser)
    sub.required = True

    s = sub.add_parser("simulate", help="render a synthetic row to a dataset directory")
    s.add_argument("--scene", required=True, help="scene file")
    s.add_argument("--out", required=True, help="dataset directory to (re)write")
    s.add_argument("--seed", type=int, default=0, help="seed for random layouts and noise")
    s.add_argument("--calib", help="calibration file (default camera if omitted)")
    s.add_argument("--scale", type=float, default=1.0, help="resolution factor for the default camera")
    s.add_argument("--clean", action="store_true", help="write noise-free detections")
    n = NoiseSpec()
    s.add_argument("--odometry-sigma", type=float, default=n.odometry_sigma)
    s.add_argument("--dropout", type=float, default=n.dropout_prob)
    s.add_argument("--fp-rate", type=float, default=n.false_positive_rate)
    s.add_argument("--jitter", type=int, default=n.mask_jitter)
    s.add_argument("--small-object-area", type=float, default=n.small_object_area)

    t = sub.add_parser("track", help="count fruit in one dataset")
    t.add_argument("--data", required=True)
    t.add_argument("--variant", choices=VARIANTS)
    t.add_argument("--iou", type=float)
    t.add_argument("--config", help="tracker config file; flags override it")

    m = sub.add_parser("map", help="build a PLY row map from one dataset")
    m.add_argument("--data", required=True)
    m.add_argument("--out", required=True, help=".ply destination")
    d = MapConfig()
    m.add_argument("--skip", type=int, default=d.skip)
    m.add_argument("--d-min", type=float, default=d.d_min)
    m.add_argument("--d-max", type=float, default=d.d_max)
    m.add_argument("--binary", action="store_true", help="binary little-endian PLY")

    w = sub.add_parser("sweep", help="run every variant and IoU threshold over datasets")
    w.add_argument("--data", required=True, nargs="+")
    w.add_argument("--variants", default=",".join(VARIANTS))
    w.add_argument("--iou", default="0.1,0.2,0.3,0.4,0.5")
    w.add_argument("--config", help="tracker config file for the shared parameters")
    w.add_argument("--out", help="CSV destination (stdout if omitted)")
    return p


def _tracker_config(args):
    cfg = parse_tracker_config(_read(args.config)) if args.config else TrackerConfig()
    over = {}
    if getattr(args, "variant", None):
        over["variant"] = args.variant
    if getattr(args, "iou", None) is not None and args.command == "track":
        over["iou_threshold"] = args.iou
    return replace(cfg, **over)


def cmd_simulate(args, out):
    if args.calib:
        calib = parse_calibration(_read(args.calib))
    else:
        calib = Calibration.default()
        if args.scale != 1.0:
            calib = Calibration(calib.intrinsics.scaled(args.scale), calib.extrinsics)
    spec = parse_scene(_read(args.scene), seed=args.seed, calib=calib)
    noise = None
    if not args.clean:
        noise = NoiseSpec(
            args.odometry_sigma, args.dropout, args.fp_rate, args.jitter, args.seed, args.small_object_area
        )
    row = SimulatedRow(generate_scene(spec, args.seed), calib, noise)
    gt = save_dataset(row, args.out, calib)
    print(f"wrote {len(row)} frames to {args.out} (gt_count {gt})", file=out)


def cmd_track(args, out):
    cfg = _tracker_config(args)
    ds = load_dataset(args.data)
    print(count_row(ds, cfg, ds.calibration), file=out)


def cmd_map(args, out):
    cfg = MapConfig(args.skip, args.d_min, args.d_max)
    ds = load_dataset(args.data)
    cloud = build_map(ds, cfg)
    write_ply(cloud, args.out, binary=args.binary)
    print(f"wrote {len(cloud)} points to {args.out}", file=out)


def cmd_sweep(args, out):
    variants = [v.strip() for v in args.variants.split(",") if v.strip()]
    bad = set(variants) - set(VARIANTS)
    if bad:
        raise UsageError(f"unknown variants {sorted(bad)}")
    thresholds = _floats(args.iou)
    base = _tracker_config(args)
    datasets = [load_dataset(p) for p in args.data]
    report = sweep(datasets, variants, thresholds, base)
    text = report.to_csv()
    if args.out:
        atomic_write(args.out, text.encode("utf-8"))
    else:
        out.write(text)


COMMANDS = {"simulate": cmd_simulate, "track": cmd_track, "map": cmd_map, "sweep": cmd_sweep}


def _configure_logging():
    level = os.environ.get("ROWTRACKER_LOG", "warning").lower()
    if level not in LOG_LEVELS:
        raise UsageError(f"ROWTRACKER_LOG must be one of {sorted(LOG_LEVELS)}")
    logging.basicConfig(level=LOG_LEVELS[level], format="%(levelname)s %(name)s: %(message)s")


def main(argv=None, out=None):
    """Run one command; returns the process exit status."""
    out = out or sys.stdout
    try:
        _configure_logging()
        args = build_parser().parse_args(argv)
        COMMANDS[args.command](args, out)
    except UsageError as exc:
        print(f"rowtracker: usage error: {exc}", file=sys.stderr)
        return 2
    except (RowTrackerError, OSError) as exc:
        print(f"rowtracker: error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
