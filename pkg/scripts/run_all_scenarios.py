#!/usr/bin/env python3
"""Run the full default scenario library and print a metrics table.

Outputs (telemetry CSV, metrics JSON, plots) land under --out, one
subdirectory per scenario.

Usage:
    python scripts/run_all_scenarios.py --out results [--config cfg.yaml] [--seed 0]
"""

import argparse
import sys
import time
from pathlib import Path

from raceloop.config import load_config
from raceloop.sim import build_scenario, build_track_line, compute_metrics, emit_outputs, run_scenario


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out", type=Path, default=Path("results"))
    parser.add_argument("--config", type=Path, default=None)
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args()

    cfg = load_config(args.config)
    print("fitting the racing line...")
    line = build_track_line(cfg)
    print(f"  {len(line)} samples over {line.total_length:.1f} m")

    header = f"{'scenario':<14} {'status':<8} {'max|cte|':>9} {'mean|cte|':>10} {'max|d|':>8} {'v rmse':>7} {'wall':>6}"
    print(header)
    print("-" * len(header))
    failures = 0
    for name in cfg.scenarios:
        scenario = build_scenario(name, cfg, line)
        start = time.perf_counter()
        telemetry = run_scenario(scenario, cfg, seed=args.seed)
        wall = time.perf_counter() - start
        metrics = compute_metrics(telemetry, warmup=cfg.sim.warmup)
        emit_outputs(telemetry, metrics, args.out / name)
        status = "ABORTED" if telemetry.aborted else "ok"
        failures += telemetry.aborted
        print(
            f"{name:<14} {status:<8} {metrics.max_abs_cte:>8.3f}m {metrics.mean_abs_cte:>9.3f}m "
            f"{metrics.max_steer:>7.4f} {metrics.speed_tracking_rmse:>6.3f} {wall:>5.1f}s"
        )
    print(f"\noutputs under {args.out}/")
    return 2 if failures else 0


if __name__ == "__main__":
    sys.exit(main())
