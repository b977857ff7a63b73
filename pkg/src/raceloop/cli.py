"""Command-line interface.

Subcommands: fit-line (waypoints CSV -> line CSV), run (one scenario),
sweep (constant-speed laps over a list of speeds), report (metrics table of
previous runs). Exit codes: 0 success, 1 config/input error, 2 run aborted
(corridor), 3 gain-synthesis failure.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys
from pathlib import Path

from .config import ScenarioSettings, load_config
from .errors import ConfigError, RacelineError, SynthesisError
from .raceline import fit_closed_raceline, load_waypoints_csv
from .sim import Metrics, build_scenario, build_track_line, compute_metrics, emit_outputs, run_scenario

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_ABORTED = 2
EXIT_SYNTHESIS = 3


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="raceloop", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p_fit = sub.add_parser("fit-line", help="fit a closed racing line through waypoints")
    p_fit.add_argument("waypoints", type=Path, help="CSV with x,y columns")
    p_fit.add_argument("--spacing", type=float, default=0.5, help="sample spacing [m]")
    p_fit.add_argument("--smoothing-passes", type=int, default=0)
    p_fit.add_argument("-o", "--output", type=Path, required=True, help="output line CSV")

    p_run = sub.add_parser("run", help="run one scenario closed-loop")
    p_run.add_argument("scenario", help="scenario name from the config")
    p_run.add_argument("--config", type=Path, default=None, help="YAML config (defaults built in)")
    p_run.add_argument("--seed", type=int, default=0)
    p_run.add_argument("-o", "--output", type=Path, required=True, help="output directory")

    p_sweep = sub.add_parser("sweep", help="constant-speed laps over several target speeds")
    p_sweep.add_argument("--speeds", required=True, help="comma-separated m/s, e.g. 25,40,50,60")
    p_sweep.add_argument("--config", type=Path, default=None)
    p_sweep.add_argument("--seed", type=int, default=0)
    p_sweep.add_argument("--duration", type=float, default=None, help="per-run seconds (default: one lap + margin)")
    p_sweep.add_argument("-o", "--output", type=Path, required=True)

    p_report = sub.add_parser("report", help="print a metrics table for earlier runs")
    p_report.add_argument("directory", type=Path)
    return parser


def _print_metrics(name: str, metrics: Metrics, aborted: bool, reason: str = "") -> None:
    status = "ABORTED" if aborted else "ok"
    print(
        f"{name:<18} {status:<8} max|cte|={metrics.max_abs_cte:7.3f} m  "
        f"mean|cte|={metrics.mean_abs_cte:6.3f} m  max|steer|={metrics.max_steer:6.4f} rad  "
        f"v_rmse={metrics.speed_tracking_rmse:6.3f} m/s  sat={metrics.saturation_fraction:5.3f}"
    )
    if aborted and reason:
        print(f"    reason: {reason}")


def _cmd_fit_line(args: argparse.Namespace) -> int:
    waypoints = load_waypoints_csv(args.waypoints)
    line = fit_closed_raceline(
        waypoints, sample_spacing=args.spacing, smoothing_passes=args.smoothing_passes
    )
    line.to_csv(args.output)
    print(
        f"fitted line: {len(line)} samples, length {line.total_length:.1f} m, "
        f"|kappa| up to {abs(line.kappa).max():.5f} 1/m -> {args.output}"
    )
    return EXIT_OK


def _run_one(name: str, cfg: AppConfig, line, seed: int, out_dir: Path) -> int:
    scenario = build_scenario(name, cfg, line)
    telemetry = run_scenario(scenario, cfg, seed=seed)
    metrics = compute_metrics(telemetry, warmup=cfg.sim.warmup)
    emit_outputs(telemetry, metrics, out_dir)
    _print_metrics(name, metrics, telemetry.aborted, telemetry.abort_reason)
    return EXIT_ABORTED if telemetry.aborted else EXIT_OK


def _cmd_run(args: argparse.Namespace) -> int:
    cfg = load_config(args.config)
    line = build_track_line(cfg)
    return _run_one(args.scenario, cfg, line, args.seed, args.output)


def _cmd_sweep(args: argparse.Namespace) -> int:
    try:
        speeds = [float(s) for s in args.speeds.split(",") if s.strip()]
    except ValueError as exc:
        raise ConfigError(f"bad --speeds value {args.speeds!r}: {exc}") from exc
    if not speeds:
        raise ConfigError("--speeds is empty")
    cfg = load_config(args.config)
    line = build_track_line(cfg)
    worst = EXIT_OK
    for speed in speeds:
        duration = args.duration or line.total_length / speed + 10.0
        name = f"sweep_{speed:g}"
        scenarios = dict(cfg.scenarios)
        scenarios[name] = ScenarioSettings(
            kind="constant_speed_lap", v_target=speed, duration=duration
        )
        cfg_speed = dataclasses.replace(cfg, scenarios=scenarios)
        code = _run_one(name, cfg_speed, line, args.seed, args.output / name)
        worst = max(worst, code)
    return worst


def _cmd_report(args: argparse.Namespace) -> int:
    metric_files = sorted(args.directory.rglob("metrics.json"))
    if not metric_files:
        print(f"no metrics.json files under {args.directory}", file=sys.stderr)
        return EXIT_CONFIG
    for path in metric_files:
        payload = json.loads(path.read_text())
        metrics = Metrics.from_dict(payload["metrics"])
        name = payload.get("metadata", {}).get("scenario", path.parent.name)
        _print_metrics(name, metrics, payload.get("aborted", False), payload.get("abort_reason", ""))
    return EXIT_OK


def main(argv: list[str] | None = None) -> int:
    args = _build_parser().parse_args(argv)
    handlers = {
        "fit-line": _cmd_fit_line,
        "run": _cmd_run,
        "sweep": _cmd_sweep,
        "report": _cmd_report,
    }
    try:
        return handlers[args.command](args)
    except (ConfigError, RacelineError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except SynthesisError as exc:
        print(f"synthesis error: {exc}", file=sys.stderr)
        return EXIT_SYNTHESIS


if __name__ == "__main__":
    sys.exit(main())
