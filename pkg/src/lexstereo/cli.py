"""Command-line driver: estimate both disparity maps of a rectified pair and write results."""

from __future__ import annotations

import argparse
import csv
import itertools
import sys
import time
from pathlib import Path

import numpy as np

from . import io
from .config import DEFAULT_CONFIG, ConfigError, RunConfig, make_run_config, parse_config_text
from .core import StereoPair
from .energy import EnergyModel
from .localexp import optimize
from .metrics import THRESHOLDS, bad_rate
from .postproc import postprocess

TRACE_COLUMNS = ("outer_iter", "level", "group", "seconds", "energy_left", "energy_right", "bad20_nonocc")


class RunError(Exception):
    pass


def _require(path: Path | None, what: str):
    if path is not None and not Path(path).is_file():
        raise RunError(f"{what} not found: {path}")


def _fmt(x) -> str:
    return "" if x is None else repr(float(x))


def write_trace(path, trace_left, trace_right) -> int:
    rows = 0
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(TRACE_COLUMNS)
        for left, right in itertools.zip_longest(trace_left, trace_right):
            ref = left or right
            seconds = (left.seconds if left else 0.0) + (right.seconds if right else 0.0)
            writer.writerow([ref.outer_iter, ref.level, ref.group, f"{seconds:.6f}",
                             _fmt(left.energy if left else None), _fmt(right.energy if right else None),
                             _fmt(left.bad_rate if left else None)])
            rows += 1
    return rows


def run(cfg: RunConfig) -> int:
    """Run the full pipeline. Returns a process exit status."""
    try:
        _require(cfg.left, "left image")
        _require(cfg.right, "right image")
        _require(cfg.gt, "ground truth")
        _require(cfg.nonocc, "non-occlusion mask")
        try:
            io.ensure_dir(cfg.out_dir)
        except OSError as err:
            raise RunError(f"cannot create output directory {cfg.out_dir}: {err}") from err

        pair = StereoPair(io.read_image(cfg.left), io.read_image(cfg.right), cfg.disp_max)
        gt = mask = None
        if cfg.gt is not None:
            gt = io.read_pfm(cfg.gt).astype(np.float64)
            if gt.shape != (pair.height, pair.width):
                raise RunError(f"ground truth size {gt.shape} does not match the images")
            if cfg.nonocc is not None:
                mask = io.read_mask(cfg.nonocc)
        opt = cfg.optimizer_config()

        start = time.perf_counter()
        fields = {}
        traces = {}
        for view in ("left", "right"):
            model = EnergyModel(pair, cfg.match, cfg.smooth, view)
            fields[view], traces[view] = optimize(model, opt, gt if view == "left" else None,
                                                  mask if view == "left" else None)
        if cfg.post:
            fields["left"], fields["right"], _, _ = postprocess(pair, fields["left"], fields["right"],
                                                                cfg.lr_threshold, cfg.wm_radius, cfg.wm_gamma)
        elapsed = time.perf_counter() - start

        out = Path(cfg.out_dir)
        for view in ("left", "right"):
            disp = fields[view].disparity()
            io.write_pfm(disp, out / f"disp_{view}.pfm")
            io.write_png(io.colorize(disp, cfg.disp_max), out / f"disp_{view}.png")
        write_trace(out / "trace.csv", traces["left"], traces["right"])

        if gt is not None:
            disp = fields["left"].disparity()
            lines = []
            for t in THRESHOLDS:
                if mask is not None:
                    lines.append(f"bad{t}_nonocc = {bad_rate(disp, gt, mask, t):.4f}")
                lines.append(f"bad{t}_all = {bad_rate(disp, gt, None, t):.4f}")
            lines.append(f"energy_left = {traces['left'][-1].energy if traces['left'] else float('nan')!r}")
            lines.append(f"energy_right = {traces['right'][-1].energy if traces['right'] else float('nan')!r}")
            lines.append(f"seconds = {elapsed:.3f}")
            (out / "metrics.txt").write_text("\n".join(lines) + "\n")
    except (RunError, ConfigError, ValueError, OSError) as err:
        print(f"lexstereo: error: {err}", file=sys.stderr)
        return 2
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="lexstereo", description=__doc__)
    p.add_argument("--left", help="left image (PNG)")
    p.add_argument("--right", help="right image (PNG)")
    p.add_argument("--ndisp", type=float, help="number of disparity levels; disparities lie in [0, ndisp - 1]")
    p.add_argument("--gt", help="left ground-truth disparity (PFM)")
    p.add_argument("--nonocc", help="non-occlusion mask for the ground truth (PNG, white = evaluated)")
    p.add_argument("--config", help="parameter file (key = value lines)")
    p.add_argument("--no-post", action="store_true", help="skip consistency check and filtering")
    p.add_argument("--ransac", action="store_true", help="enable the RANSAC plane proposer")
    p.add_argument("--seed", type=int)
    p.add_argument("--workers", type=int)
    p.add_argument("--out", help="output directory")
    p.add_argument("--dump-config", action="store_true", help="print the default parameter file and exit")
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.dump_config:
        sys.stdout.write(DEFAULT_CONFIG)
        return 0
    missing = [name for name in ("left", "right", "ndisp", "out") if getattr(args, name) is None]
    if missing:
        parser.print_usage(sys.stderr)
        print(f"lexstereo: error: missing required arguments: {', '.join('--' + m for m in missing)}",
              file=sys.stderr)
        return 2
    try:
        values = None
        if args.config:
            _require(Path(args.config), "config file")
            values = parse_config_text(Path(args.config).read_text())
        if args.ndisp < 2:
            raise RunError("--ndisp must be at least 2")
        cfg = make_run_config(args.left, args.right, args.out, args.ndisp - 1, args.gt, args.nonocc, values,
                              seed=args.seed, workers=args.workers,
                              post=False if args.no_post else None, ransac=True if args.ransac else None)
    except (RunError, ConfigError, ValueError, OSError) as err:
        print(f"lexstereo: error: {err}", file=sys.stderr)
        return 2
    return run(cfg)


if __name__ == "__main__":
    sys.exit(main())
