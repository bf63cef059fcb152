"""Command-line entry point: project, train, infer, eval, bench, selftest."""
from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import math
import os
import sys
import time
from pathlib import Path

import numpy as np

from .errors import EfficientLOError


def _env_seed() -> int:
    try:
        return int(os.environ.get("EFLO_SEED", "0"))
    except ValueError:
        return 0


def _run_config(args):
    from .harness.config import RunConfig, load_config
    from .odometry import NetworkConfig

    cfg = load_config(args.config) if getattr(args, "config", None) else RunConfig()
    if getattr(args, "full", False) and not getattr(args, "config", None):
        cfg = dataclasses.replace(cfg, network=NetworkConfig())
    return cfg


def _scan_list(directory, start: int, limit: int | None):
    d = Path(directory)
    if (d / "velodyne").is_dir():
        d = d / "velodyne"
    scans = sorted(d.glob("*.bin"))
    scans = scans[start:] if limit is None else scans[start:start + limit]
    return scans


def cmd_project(args) -> int:
    from .harness.io import load_scan
    from .projection import ProjectionConfig, project, write_grid

    cfg = ProjectionConfig(H=args.height, W=args.width, fov_up=args.fov_up, fov_down=args.fov_down)
    pts = load_scan(args.scan, args.half_side)
    pc = project(pts, cfg)
    write_grid(args.out, pc)
    print(json.dumps({"valid_cells": pc.count, **pc.stats}))
    return 0


def _load_dataset(cfg, seed: int):
    from .harness.io import load_calib_extrinsic, load_poses, to_lidar_frame
    from .harness.train import sequence_pairs, synthetic_pairs

    data = cfg.data
    if data["source"] == "synthetic":
        return synthetic_pairs(dataclasses.replace(cfg.synth, seed=cfg.synth.seed + seed), int(data["pairs"]))
    if data["source"] == "kitti":
        seq = Path(data["sequence_dir"])
        scans = _scan_list(seq, 0, None)
        poses = load_poses(seq / "poses.txt")[: len(scans)]
        if data.get("calib"):
            poses = to_lidar_frame(poses, load_calib_extrinsic(data["calib"]))
        return sequence_pairs(scans[: len(poses)], poses, data["half_side"])
    raise EfficientLOError(f"unknown data source {data['source']!r}")


def cmd_train(args) -> int:
    from .harness.config import save_config
    from .harness.train import Trainer
    from .odometry import EfficientLONet

    cfg = _run_config(args)
    tcfg = cfg.train
    if args.steps is not None:
        tcfg = dataclasses.replace(tcfg, steps=args.steps)
    seed = args.seed if args.seed is not None else _env_seed()
    tcfg = dataclasses.replace(tcfg, seed=seed)
    cfg = dataclasses.replace(cfg, train=tcfg)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    save_config(out / "config.ini", cfg)
    pairs = _load_dataset(cfg, seed)
    trainer = Trainer(EfficientLONet(cfg.network, seed=seed), pairs, tcfg, cfg.augment)

    def progress(row):
        if row["step"] % tcfg.log_every == 0:
            print(f"step {row['step']:6d}  loss {row['loss']:9.4f}  "
                  f"rot {row['rot_deg_0']:.3f} deg  trans {row['trans_m_0']:.4f} m", flush=True)

    res = trainer.fit(out, progress if not args.quiet else None)
    print(f"checkpoint: {res.checkpoint}")
    return 0


def cmd_infer(args) -> int:
    from .harness.io import write_poses
    from .harness.train import infer_sequence, load_network
    from .odometry import EfficientLONet

    cfg = _run_config(args)
    if args.checkpoint:
        net = load_network(cfg.network, args.checkpoint)
    else:
        seed = args.seed if args.seed is not None else _env_seed()
        net = EfficientLONet(cfg.network, seed=seed)
        print("no checkpoint given: using untrained weights", file=sys.stderr)
    scans = _scan_list(args.scans, args.start, args.limit)
    res = infer_sequence(net, scans, args.half_side)
    write_poses(args.out, res.trajectory)
    if args.timing:
        with open(args.timing, "w", newline="") as fh:
            w = csv.DictWriter(fh, fieldnames=["pair", "prep_ms", "infer_ms"])
            w.writeheader()
            w.writerows(res.timings)
    print(json.dumps({"poses": len(res.trajectory), **res.timing_summary()}))
    return 0


def cmd_eval(args) -> int:
    from .harness.io import load_poses
    from .harness.metrics import evaluate

    pred, gt = load_poses(args.pred), load_poses(args.gt)
    n = min(len(pred), len(gt))
    if len(pred) != len(gt):
        print(f"warning: truncating to {n} poses (pred {len(pred)}, gt {len(gt)})", file=sys.stderr)
    report = evaluate(pred[:n], gt[:n], step=args.step)
    d = report.as_dict()
    text = json.dumps(d, indent=2, default=float)
    if args.json:
        Path(args.json).write_text(text + "\n")
    if args.csv:
        with open(args.csv, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["length_m", "t_rel_pct", "r_rel_deg_per_100m"])
            for L, (t, r) in sorted(report.per_length.items()):
                w.writerow([L, t, r])
            w.writerow(["all", report.t_rel, report.r_rel])
    if args.plots:
        from .harness.plots import plot_length_errors, plot_trajectory

        out = Path(args.plots)
        out.mkdir(parents=True, exist_ok=True)
        plot_trajectory(out / "trajectory_xy.svg", gt[:n], pred[:n])
        if report.per_length:
            plot_length_errors(out / "length_errors.svg", report.per_length)
    print(text)
    return 0


def cmd_bench(args) -> int:
    from .harness.bench import BenchConfig, bench_grouping, summarize, write_bench_csv

    cfg = BenchConfig(sizes=tuple(args.sizes), repetitions=args.reps, backend=args.backend)
    rows = bench_grouping(cfg)
    if args.out:
        write_bench_csv(args.out, rows)
    print(summarize(rows))
    return 0


def cmd_selftest(args) -> int:
    from .harness import oracles
    from .harness.config import dumps

    if args.show_config:
        print(dumps(_run_config(args)))
        return 0
    suites = [
        ("projection", lambda: oracles.check_projection(50, 20_000, oracle_clouds=3)),
        ("neighbors", lambda: oracles.check_neighbors(50)),
        ("rigid", lambda: oracles.check_rigid(1000)),
        ("metrics", oracles.check_metrics),
        ("backends", oracles.check_backends),
    ]
    failed = 0
    for name, fn in suites:
        t0 = time.perf_counter()
        ok, detail = fn()
        failed += not ok
        print(f"{'PASS' if ok else 'FAIL'}  {name:<11} {detail}  ({time.perf_counter() - t0:.1f} s)")
    return 1 if failed else 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="efficientlo", description=__doc__)
    p.add_argument("--threads", type=int, default=None,
                   help="kernel threads (overrides EFLO_NUM_THREADS)")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("project", help="project a scan and dump the grid")
    s.add_argument("scan")
    s.add_argument("--out", required=True)
    s.add_argument("--height", type=int, default=64)
    s.add_argument("--width", type=int, default=1800)
    s.add_argument("--fov-up", type=float, default=2.0)
    s.add_argument("--fov-down", type=float, default=-24.8)
    s.add_argument("--half-side", type=float, default=math.inf)
    s.set_defaults(func=cmd_project)

    s = sub.add_parser("train", help="train from a config file")
    s.add_argument("--config")
    s.add_argument("--full", action="store_true", help="full-resolution network defaults")
    s.add_argument("--out", required=True)
    s.add_argument("--steps", type=int)
    s.add_argument("--seed", type=int)
    s.add_argument("--quiet", action="store_true")
    s.set_defaults(func=cmd_train)

    s = sub.add_parser("infer", help="estimate a trajectory over a scan directory")
    s.add_argument("--checkpoint")
    s.add_argument("--config")
    s.add_argument("--full", action="store_true", help="full-resolution network defaults")
    s.add_argument("--scans", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--start", type=int, default=0)
    s.add_argument("--limit", type=int)
    s.add_argument("--half-side", type=float, default=15.0,
                   help="keep points with max(|x|, |y|) <= this many meters (inf: no crop)")
    s.add_argument("--timing")
    s.add_argument("--seed", type=int)
    s.set_defaults(func=cmd_infer)

    s = sub.add_parser("eval", help="KITTI drift, ATE and RPE of a pose file")
    s.add_argument("--pred", required=True)
    s.add_argument("--gt", required=True)
    s.add_argument("--step", type=int, default=10)
    s.add_argument("--json")
    s.add_argument("--csv")
    s.add_argument("--plots", help="directory for SVG figures")
    s.set_defaults(func=cmd_eval)

    s = sub.add_parser("bench", help="time grouping strategies")
    s.add_argument("--sizes", type=int, nargs="+", default=[100_000])
    s.add_argument("--reps", type=int, default=20)
    s.add_argument("--backend", choices=["compiled", "python"])
    s.add_argument("--out")
    s.set_defaults(func=cmd_bench)

    s = sub.add_parser("selftest", help="run the oracle suites")
    s.add_argument("--show-config", action="store_true", help="print all config defaults")
    s.add_argument("--config")
    s.add_argument("--full", action="store_true")
    s.set_defaults(func=cmd_selftest)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.threads is not None:
        os.environ["EFLO_NUM_THREADS"] = str(args.threads)
    try:
        return args.func(args)
    except (EfficientLOError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
