"""Closed-loop simulation: scenarios, fixed-step integration, telemetry,
metrics, and file outputs.

The control loop runs at a fixed rate with the plant integrated by classical
RK4 at an integer number of substeps per control period (zero-order hold on
the command). Runs are deterministic: (config, scenario, seed) fully
determine every output byte.
"""

from __future__ import annotations

import dataclasses
import json
import math
from dataclasses import dataclass
from pathlib import Path
import numpy as np

from .config import AppConfig, ScenarioSettings, config_hash
from .control import (
    Command,
    ControlMemory,
    LateralConfig,
    LongitudinalConfig,
    control_step,
)
from .errors import ConfigError, PlantError, RacelineError
from .estimator import initial_estimate, maybe_resynthesize, measure_axle_forces, rls_update
from .lqr import build_bracket_gains
from .raceline import RacingLine
from .tracks import build_oval_line, lane_change_line, offset_line, slalom_line
from .vehicle import (
    LinearTire,
    PlantInput,
    VehicleParams,
    VehicleState,
    lateral_acceleration,
    plant_derivative,
)

TELEMETRY_VERSION = "raceloop-telemetry-v1"
TELEMETRY_COLUMNS = (
    "t", "x", "y", "xdot", "ydot", "psi", "psidot",
    "delta", "throttle", "brake", "gear",
    "e1", "e1dot", "e2", "e2dot",
    "cte", "v_target", "bracket_index", "saturated",
    "Caf_hat", "Car_hat", "alpha_f", "alpha_r", "Ff_meas", "Fr_meas", "updated",
)
_INT_COLUMNS = {"gear", "bracket_index", "saturated", "updated"}


@dataclass(frozen=True)
class Scenario:
    """A runnable scenario: resolved racing line(s) plus the target-speed
    profile. For lane changes, lines holds (original lane, parallel lane) and
    maneuver_line is the blended transition path that becomes active at the
    switch trigger."""

    name: str
    settings: ScenarioSettings
    lines: tuple[RacingLine, ...]
    duration: float
    maneuver_line: RacingLine | None = None

    @property
    def kind(self) -> str:
        return self.settings.kind

    def v_target_at(self, t: float) -> float:
        s = self.settings
        if s.kind == "speed_ramp":
            frac = min(max(t / self.duration, 0.0), 1.0)
            return s.v_start + (s.v_end - s.v_start) * frac
        return s.v_target


def build_track_line(cfg: AppConfig) -> RacingLine:
    """The configured base racing line (fitted oval, or a waypoint file)."""
    track = cfg.track
    if track.waypoints_file is not None:
        from .raceline import fit_closed_raceline, load_waypoints_csv

        waypoints = load_waypoints_csv(track.waypoints_file)
        return fit_closed_raceline(
            waypoints,
            sample_spacing=track.sample_spacing,
            smoothing_passes=track.smoothing_passes,
            max_waypoint_shift=track.max_waypoint_shift,
        )
    return build_oval_line(
        half_straight=track.half_straight,
        radius=track.radius,
        waypoint_count=track.waypoint_count,
        sample_spacing=track.sample_spacing,
        smoothing_passes=track.smoothing_passes,
        max_waypoint_shift=track.max_waypoint_shift,
    )


def build_scenario(name: str, cfg: AppConfig, base_line: RacingLine) -> Scenario:
    if name not in cfg.scenarios:
        raise ConfigError(f"unknown scenario {name!r}; configured: {sorted(cfg.scenarios)}")
    settings = cfg.scenarios[name]
    if settings.duration is not None:
        duration = settings.duration
    else:
        v_ref = settings.v_target if settings.v_target is not None else settings.v_end
        duration = settings.laps * base_line.total_length / v_ref
    if settings.kind == "lane_change":
        lane_b = offset_line(base_line, settings.lane_offset)
        maneuver = lane_change_line(
            base_line, settings.lane_offset, settings.switch_trigger_s, settings.blend_length
        )
        return Scenario(name, settings, (base_line, lane_b), duration, maneuver)
    if settings.kind == "slalom":
        weave = slalom_line(base_line, settings.slalom_amplitude, settings.slalom_waves)
        return Scenario(name, settings, (weave,), duration)
    return Scenario(name, settings, (base_line,), duration)


class Telemetry:
    """Column-array record of one run, with run metadata and outcome flags."""

    def __init__(
        self,
        columns: dict[str, np.ndarray],
        metadata: dict,
        aborted: bool = False,
        abort_reason: str = "",
        switch_count: int = 0,
        line_previews: tuple[np.ndarray, ...] = (),
    ):
        missing = set(TELEMETRY_COLUMNS) - set(columns)
        if missing:
            raise ValueError(f"telemetry missing columns {sorted(missing)}")
        self._columns = {name: np.asarray(columns[name]) for name in TELEMETRY_COLUMNS}
        self.metadata = metadata
        self.aborted = aborted
        self.abort_reason = abort_reason
        self.switch_count = switch_count
        self.line_previews = line_previews

    def __getitem__(self, name: str) -> np.ndarray:
        return self._columns[name]

    def __len__(self) -> int:
        return len(self._columns["t"])

    @property
    def row_count(self) -> int:
        return len(self)

    def to_csv(self, path: str | Path) -> None:
        path = Path(path)
        meta = " ".join(f"{k}={v}" for k, v in sorted(self.metadata.items()))
        lines = [
            f"# {TELEMETRY_VERSION} {meta} aborted={int(self.aborted)} switches={self.switch_count}",
            ",".join(TELEMETRY_COLUMNS),
        ]
        cols = [self._columns[name] for name in TELEMETRY_COLUMNS]
        for row in zip(*cols):
            parts = [
                f"{int(v)}" if name in _INT_COLUMNS else f"{v:.12g}"
                for name, v in zip(TELEMETRY_COLUMNS, row)
            ]
            lines.append(",".join(parts))
        path.write_text("\n".join(lines) + "\n")


@dataclass(frozen=True)
class Metrics:
    max_abs_cte: float
    mean_abs_cte: float
    max_steer: float
    speed_tracking_rmse: float
    saturation_fraction: float

    def __post_init__(self) -> None:
        if not self.max_abs_cte >= self.mean_abs_cte >= 0.0:
            raise ValueError("metrics must satisfy max >= mean >= 0")

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "Metrics":
        return cls(**{f.name: data[f.name] for f in dataclasses.fields(cls)})


def _plant_input(command: Command, params: VehicleParams) -> PlantInput:
    return PlantInput(
        delta=command.delta,
        drive_force=command.throttle * params.drive_force_max,
        brake_force=command.brake * params.brake_force_max,
    )


def integrate_step(
    state: VehicleState,
    command: Command,
    params: VehicleParams,
    front_tire,
    rear_tire,
    dt_plant: float,
) -> VehicleState:
    """One classical RK4 step of the plant with the command held constant."""
    if dt_plant <= 0.0:
        raise ValueError(f"dt_plant must be positive, got {dt_plant}")
    forces = _plant_input(command, params)

    def deriv(arr: np.ndarray) -> np.ndarray:
        return plant_derivative(VehicleState.from_array(arr), forces, params, front_tire, rear_tire)

    arr = state.as_array()
    k1 = deriv(arr)
    k2 = deriv(arr + 0.5 * dt_plant * k1)
    k3 = deriv(arr + 0.5 * dt_plant * k2)
    k4 = deriv(arr + dt_plant * k3)
    out = arr + (dt_plant / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    if not np.all(np.isfinite(out)):
        raise PlantError("plant state became non-finite during integration")
    return VehicleState.from_array(out)


def _plant_tires(cfg: AppConfig):
    if cfg.plant.tire_model == "linear":
        return LinearTire(cfg.plant.linear_caf), LinearTire(cfg.plant.linear_car)
    return cfg.tire_front, cfg.tire_rear


def _line_preview(line: RacingLine, stride_m: float = 2.0) -> np.ndarray:
    step = max(int(round(stride_m / line.spacing)), 1)
    idx = np.arange(0, len(line), step)
    idx = np.append(idx, 0)  # close the loop for plotting
    return np.column_stack([line.x[idx], line.y[idx]])


def run_scenario(scenario: Scenario, cfg: AppConfig, seed: int = 0) -> Telemetry:
    """Run one scenario closed-loop and return its telemetry.

    Control runs at the configured rate with plant substeps in between. A
    vehicle leaving the corridor around the active line aborts the run;
    partial telemetry is returned with the failure flag set.
    """
    rng = np.random.default_rng(seed)
    params = cfg.vehicle
    schedule = build_bracket_gains(params, [b.to_bracket() for b in cfg.brackets])
    lat_cfg = LateralConfig(
        d_base=cfg.lateral.d_base,
        k_vd=cfg.lateral.k_vd,
        schedule=schedule,
        steer_limit=params.steer_limit,
    )
    lon_cfg = LongitudinalConfig(
        kp=cfg.longitudinal.kp,
        k_ff=cfg.longitudinal.k_ff,
        alpha_brake=cfg.longitudinal.alpha_brake,
        delta_throttle=cfg.longitudinal.delta_throttle,
        delta_brake=cfg.longitudinal.delta_brake,
        gear_table=tuple((thr, i + 1) for i, thr in enumerate(cfg.longitudinal.gear_thresholds)),
        gear_hysteresis=cfg.longitudinal.gear_hysteresis,
    )
    front_tire, rear_tire = _plant_tires(cfg)
    est_cfg = cfg.estimator
    dt = cfg.sim.dt
    substeps = cfg.plant.substeps
    n_steps = int(round(scenario.duration / dt))
    resynth_every = max(int(round(est_cfg.resynth_period_s / dt)), 1)

    active = scenario.lines[0]
    switched = False
    switch_count = 0
    switch_t = math.nan
    resynth_count = 0

    v0 = scenario.v_target_at(0.0)
    x0, y0, psi0, kappa0 = active.point_at(0.0)
    xdot0 = max(cfg.sim.start_speed_factor * v0, cfg.sim.start_speed_floor)
    state = VehicleState(x=x0, y=y0, xdot=xdot0, ydot=0.0, psi=psi0, psidot=kappa0 * xdot0)
    memory = ControlMemory()
    estimate = initial_estimate(params)
    est_params = params

    columns: dict[str, list] = {name: [] for name in TELEMETRY_COLUMNS}
    aborted = False
    abort_reason = ""

    def record(t, vt, cmd, info, meas, est, est_updated):
        columns["t"].append(t)
        columns["x"].append(state.x)
        columns["y"].append(state.y)
        columns["xdot"].append(state.xdot)
        columns["ydot"].append(state.ydot)
        columns["psi"].append(state.psi)
        columns["psidot"].append(state.psidot)
        columns["delta"].append(cmd.delta)
        columns["throttle"].append(cmd.throttle)
        columns["brake"].append(cmd.brake)
        columns["gear"].append(cmd.gear)
        columns["e1"].append(info.error.e1)
        columns["e1dot"].append(info.error.e1dot)
        columns["e2"].append(info.error.e2)
        columns["e2dot"].append(info.error.e2dot)
        columns["cte"].append(info.cte)
        columns["v_target"].append(vt)
        columns["bracket_index"].append(info.bracket_index)
        columns["saturated"].append(int(info.saturated))
        columns["Caf_hat"].append(est.Caf_hat)
        columns["Car_hat"].append(est.Car_hat)
        columns["alpha_f"].append(meas.alpha_f if meas is not None else 0.0)
        columns["alpha_r"].append(meas.alpha_r if meas is not None else 0.0)
        columns["Ff_meas"].append(meas.F_f if meas is not None else 0.0)
        columns["Fr_meas"].append(meas.F_r if meas is not None else 0.0)
        columns["updated"].append(int(est_updated))

    for k in range(n_steps + 1):
        t = k * dt
        v_target = scenario.v_target_at(t)
        try:
            command, info = control_step(state, active, v_target, lat_cfg, lon_cfg, memory, dt)
        except (PlantError, RacelineError) as exc:
            aborted, abort_reason = True, str(exc)
            break
        if abs(info.cte) > cfg.sim.corridor:
            aborted = True
            abort_reason = (
                f"left the {cfg.sim.corridor:.0f} m corridor at t={t:.2f} s (cte {info.cte:.1f} m)"
            )
            break

        measurement = None
        est_updated = False
        if est_cfg.enabled:
            a_y, psiddot = lateral_acceleration(
                state, _plant_input(command, params), params, front_tire, rear_tire
            )
            a_y += rng.normal(0.0, est_cfg.noise.sigma_ay)
            psiddot += rng.normal(0.0, est_cfg.noise.sigma_psiddot)
            measurement = measure_axle_forces(state, a_y, psiddot, command.delta, params, t=t)
            new_estimate = rls_update(
                estimate,
                measurement,
                est_cfg.forgetting,
                est_cfg.excitation_threshold,
                est_cfg.validity_limit,
            )
            est_updated = new_estimate is not estimate
            estimate = new_estimate
            if (
                est_cfg.resynthesize
                and k > 0
                and k % resynth_every == 0
                and estimate.sample_count >= est_cfg.warmup_samples
            ):
                new_schedule, est_params = maybe_resynthesize(
                    estimate, lat_cfg.schedule, est_params, est_cfg.resynth_threshold
                )
                if new_schedule is not lat_cfg.schedule:
                    lat_cfg = dataclasses.replace(lat_cfg, schedule=new_schedule)
                    resynth_count += 1

        record(t, v_target, command, info, measurement, estimate, est_updated)
        if k == n_steps:
            break

        if (
            scenario.kind == "lane_change"
            and not switched
            and info.s_vehicle >= scenario.settings.switch_trigger_s
        ):
            active = scenario.maneuver_line
            switched = True
            switch_count += 1
            switch_t = t

        memory = ControlMemory(throttle=command.throttle, brake=command.brake, gear=command.gear)
        try:
            for _ in range(substeps):
                state = integrate_step(state, command, params, front_tire, rear_tire, dt / substeps)
        except PlantError as exc:
            aborted, abort_reason = True, f"plant failure at t={t:.2f} s: {exc}"
            break

    metadata = {
        "scenario": scenario.name,
        "seed": seed,
        "config": config_hash(cfg),
        "dt": dt,
        "substeps": substeps,
        "switch_t": switch_t,
        "resynth_count": resynth_count,
    }
    previews = tuple(_line_preview(line) for line in scenario.lines)
    if scenario.maneuver_line is not None:
        previews = previews + (_line_preview(scenario.maneuver_line),)
    return Telemetry(
        columns={name: np.asarray(vals) for name, vals in columns.items()},
        metadata=metadata,
        aborted=aborted,
        abort_reason=abort_reason,
        switch_count=switch_count,
        line_previews=previews,
    )


def compute_metrics(telemetry: Telemetry, warmup: float = 5.0) -> Metrics:
    """Run metrics, excluding the initial warmup window (the standing-start
    transient is not comparable to steady lap performance). Runs shorter than
    the warmup are evaluated whole."""
    if len(telemetry) == 0:
        raise ValueError("cannot compute metrics of empty telemetry")
    t = telemetry["t"]
    mask = t >= warmup
    if not np.any(mask):
        mask = np.ones_like(t, dtype=bool)
    cte = telemetry["cte"][mask]
    delta = telemetry["delta"][mask]
    v_err = (telemetry["v_target"] - telemetry["xdot"])[mask]
    return Metrics(
        max_abs_cte=float(np.max(np.abs(cte))),
        mean_abs_cte=float(np.mean(np.abs(cte))),
        max_steer=float(np.max(np.abs(delta))),
        speed_tracking_rmse=float(np.sqrt(np.mean(v_err**2))),
        saturation_fraction=float(np.mean(telemetry["saturated"][mask])),
    )


def emit_outputs(telemetry: Telemetry, metrics: Metrics, out_dir: str | Path) -> dict[str, Path]:
    """Write telemetry.csv, metrics.json, and plots.svg into out_dir."""
    out_dir = Path(out_dir)
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
        paths = {
            "telemetry": out_dir / "telemetry.csv",
            "metrics": out_dir / "metrics.json",
            "plots": out_dir / "plots.svg",
        }
        telemetry.to_csv(paths["telemetry"])
        payload = {
            "metrics": metrics.to_dict(),
            "metadata": telemetry.metadata,
            "aborted": telemetry.aborted,
            "abort_reason": telemetry.abort_reason,
            "switch_count": telemetry.switch_count,
            "rows": telemetry.row_count,
        }
        paths["metrics"].write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")
        _write_plots(telemetry, paths["plots"])
    except OSError as exc:
        raise OSError(f"failed writing outputs under {out_dir}: {exc}") from exc
    return paths


def _write_plots(telemetry: Telemetry, path: Path) -> None:
    import matplotlib

    from matplotlib.figure import Figure

    t = telemetry["t"]
    fig = Figure(figsize=(8.0, 10.0))
    ax_cte, ax_v, ax_xy = fig.subplots(3, 1)

    ax_cte.plot(t, telemetry["cte"], lw=0.8)
    ax_cte.set_ylabel("cross-track error [m]")
    ax_cte.grid(True, alpha=0.3)

    ax_v.plot(t, telemetry["xdot"], lw=0.8, label="vehicle")
    ax_v.plot(t, telemetry["v_target"], lw=0.8, ls="--", label="target")
    ax_v.set_xlabel("t [s]")
    ax_v.set_ylabel("speed [m/s]")
    ax_v.legend(loc="lower right", fontsize=8)
    ax_v.grid(True, alpha=0.3)

    for i, preview in enumerate(telemetry.line_previews):
        ax_xy.plot(preview[:, 0], preview[:, 1], lw=0.6, ls=":", color=f"C{i + 1}")
    ax_xy.plot(telemetry["x"], telemetry["y"], lw=0.9, color="C0")
    ax_xy.set_aspect("equal")
    ax_xy.set_xlabel("x [m]")
    ax_xy.set_ylabel("y [m]")
    ax_xy.grid(True, alpha=0.3)

    fig.suptitle(
        f"{telemetry.metadata.get('scenario', '')} (seed {telemetry.metadata.get('seed', '')})"
    )
    with matplotlib.rc_context({"svg.hashsalt": str(telemetry.metadata)}):
        fig.savefig(path, format="svg", metadata={"Date": None})
