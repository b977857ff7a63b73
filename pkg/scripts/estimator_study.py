#!/usr/bin/env python3
"""Stiffness-estimation study: convergence on the slalom under both plant
tire models, and the effect of feeding estimates back into the gain schedule
on the high-speed oval.

Usage:
    python scripts/estimator_study.py --out results/estimator [--seed 0]
"""

import argparse
import dataclasses
import sys
from pathlib import Path

import matplotlib
from matplotlib.figure import Figure

from raceloop.config import default_config
from raceloop.sim import build_scenario, build_track_line, compute_metrics, run_scenario


def run(cfg, line, name, seed):
    telemetry = run_scenario(build_scenario(name, cfg, line), cfg, seed=seed)
    return telemetry, compute_metrics(telemetry, warmup=cfg.sim.warmup)


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out", type=Path, default=Path("results/estimator"))
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args()
    args.out.mkdir(parents=True, exist_ok=True)

    cfg = default_config()
    line = build_track_line(cfg)

    linear_cfg = dataclasses.replace(cfg, plant=dataclasses.replace(cfg.plant, tire_model="linear"))
    tel_linear, _ = run(linear_cfg, line, "slalom", args.seed)
    tel_pacejka, _ = run(cfg, line, "slalom", args.seed)

    print("slalom, linear plant tires (truth: "
          f"{cfg.plant.linear_caf:.0f} / {cfg.plant.linear_car:.0f} N/rad):")
    print(f"  final estimates {tel_linear['Caf_hat'][-1]:.0f} / {tel_linear['Car_hat'][-1]:.0f} N/rad")
    lin_f = cfg.tire_front.cornering_stiffness
    lin_r = cfg.tire_rear.cornering_stiffness
    print("slalom, magic-formula plant tires (small-slip linearization "
          f"{lin_f:.0f} / {lin_r:.0f} N/rad):")
    print(f"  final estimates {tel_pacejka['Caf_hat'][-1]:.0f} / {tel_pacejka['Car_hat'][-1]:.0f} N/rad")

    fig = Figure(figsize=(8, 6))
    ax_lin, ax_pac = fig.subplots(2, 1, sharex=True)
    for ax, tel, title, truths in (
        (ax_lin, tel_linear, "linear plant", (cfg.plant.linear_caf, cfg.plant.linear_car)),
        (ax_pac, tel_pacejka, "magic-formula plant", (lin_f, lin_r)),
    ):
        ax.plot(tel["t"], tel["Caf_hat"], label="front estimate")
        ax.plot(tel["t"], tel["Car_hat"], label="rear estimate")
        ax.axhline(truths[0], ls=":", color="C0", lw=0.8)
        ax.axhline(truths[1], ls=":", color="C1", lw=0.8)
        ax.set_ylabel("stiffness [N/rad]")
        ax.set_title(title, fontsize=9)
        ax.legend(fontsize=8)
        ax.grid(alpha=0.3)
    ax_pac.set_xlabel("t [s]")
    with matplotlib.rc_context({"svg.hashsalt": "estimator-study"}):
        fig.savefig(args.out / "convergence.svg", format="svg", metadata={"Date": None})

    resynth_cfg = dataclasses.replace(
        cfg, estimator=dataclasses.replace(cfg.estimator, resynthesize=True)
    )
    _, metrics_fixed = run(cfg, line, "oval_60", args.seed)
    tel_re, metrics_re = run(resynth_cfg, line, "oval_60", args.seed)
    print("oval_60 max|cte|: fixed gains "
          f"{metrics_fixed.max_abs_cte:.3f} m, re-synthesized {metrics_re.max_abs_cte:.3f} m "
          f"({tel_re.metadata['resynth_count']} rebuild(s))")
    print(f"plots under {args.out}/")
    return 0


if __name__ == "__main__":
    sys.exit(main())
