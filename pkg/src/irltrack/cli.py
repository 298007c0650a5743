"""Command-line front end: run experiments, recompute metrics, sweep configs."""

from __future__ import annotations

import argparse
import csv
import glob
import logging
import math
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from .config import ConfigError, load_config
from .harness import SETTLE_BAND_FLOOR, SETTLE_BAND_FRACTION, run_experiment

log = logging.getLogger(__name__)


def _cmd_run(args) -> int:
    try:
        cfg = load_config(args.config)
    except (ConfigError, OSError) as err:
        print(f"error: {err}", file=sys.stderr)
        return 2
    if args.controller:
        cfg = replace(cfg, controller=args.controller)
        if cfg.controller == "homfac" and cfg.homfac is None:
            print("error: config has no [homfac] table", file=sys.stderr)
            return 2
    if args.seed is not None:
        cfg = replace(cfg, seed=args.seed)
    out = Path(args.out) if args.out else None
    result = run_experiment(cfg, out_dir=out)
    for m in result.report.joints:
        bits = [f"joint={m.joint}", f"rms={m.rms_error:.6g} rad"]
        if m.overshoot_pct is not None:
            bits.append(f"overshoot={m.overshoot_pct:.2f}%")
        bits.append("settled" if m.settling_time is not None else "unsettled")
        if m.settling_time is not None:
            bits.append(f"t_settle={m.settling_time:.3f}s")
        print("  ".join(bits))
    if not result.ok:
        print(f"error: {result.reason}", file=sys.stderr)
        return 1
    return 0


def _read_joint_csv(path: Path):
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        rows = [[float(v) for v in row] for row in reader]
    return header, np.asarray(rows)


def _cmd_metrics(args) -> int:
    log_dir = Path(args.log)
    paths = sorted(log_dir.glob("joint*.csv"))
    if not paths:
        print(f"error: no joint CSV logs under {log_dir}", file=sys.stderr)
        return 2
    print("joint,overshoot_pct,settling_time_s,rms_error_rad,max_abs_error_rad")
    for path in paths:
        _, arr = _read_joint_csv(path)
        t, theta, theta_d, eps = arr[:, 0], arr[:, 1], arr[:, 2], arr[:, 3]
        rms = float(np.sqrt(np.mean(eps**2)))
        max_abs = float(np.max(np.abs(eps)))
        # Detect a reference step from the largest theta_d discontinuity.
        overshoot = ""
        jumps = np.abs(np.diff(theta_d))
        k = int(np.argmax(jumps)) if len(jumps) else 0
        if len(jumps) and jumps[k] > 1e-6:
            step = theta_d[k + 1] - theta_d[k]
            final_ref = theta_d[k + 1]
            post = theta[k + 1:]
            overshoot = f"{max(0.0, float(np.max((post - final_ref) * math.copysign(1, step))) / abs(step) * 100.0):.4f}"
        band = max(SETTLE_BAND_FRACTION * (theta_d.max() - theta_d.min()), SETTLE_BAND_FLOOR)
        outside = np.nonzero(np.abs(eps) > band)[0]
        if outside.size == 0:
            settle = "0.0"
        elif outside[-1] == len(t) - 1:
            settle = "unsettled"
        else:
            settle = f"{t[outside[-1] + 1]:.4f}"
        print(f"{path.stem},{overshoot},{settle},{rms!r},{max_abs!r}")
    return 0


def _cmd_sweep(args) -> int:
    paths = sorted(glob.glob(args.configs))
    if not paths:
        print(f"error: no configs match {args.configs!r}", file=sys.stderr)
        return 2
    failures = 0
    for path in paths:
        name = Path(path).stem
        out = Path(args.out) / name if args.out else None
        code = _cmd_run(argparse.Namespace(config=path, controller=None, seed=None,
                                           out=str(out) if out else None))
        print(f"{name}: {'ok' if code == 0 else 'FAILED'}")
        failures += code != 0
    return 1 if failures else 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="irltrack",
        description="Actor-critic trajectory-tracking experiments on a simulated arm",
    )
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run one experiment config")
    p_run.add_argument("--config", required=True)
    p_run.add_argument("--controller", choices=["irl", "homfac"])
    p_run.add_argument("--seed", type=int)
    p_run.add_argument("--out", help="directory for joint CSVs and metrics.csv")
    p_run.set_defaults(fn=_cmd_run)

    p_met = sub.add_parser("metrics", help="recompute metrics from CSV logs")
    p_met.add_argument("--log", required=True, help="directory holding joint*.csv")
    p_met.set_defaults(fn=_cmd_metrics)

    p_sweep = sub.add_parser("sweep", help="run every config matching a glob")
    p_sweep.add_argument("--configs", required=True)
    p_sweep.add_argument("--out")
    p_sweep.set_defaults(fn=_cmd_sweep)

    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    return args.fn(args)


if __name__ == "__main__":
    sys.exit(main())
