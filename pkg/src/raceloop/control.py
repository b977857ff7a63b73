"""Lateral and longitudinal tracking control.

Lateral: a speed-scaled lookahead target on the racing line, the error state
relative to that target, and a gain-scheduled state feedback u = -K e clamped
to the steering limit. Longitudinal: proportional speed error plus a
feedforward term on the target speed, split into throttle or brake, with
per-channel rate limiting. Gear selection is a threshold lookup with a
downshift hysteresis band.

Everything here is a pure function of its arguments; the caller owns the
small amount of loop memory (previous pedal positions, current gear).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

from .lqr import VelocityBracket, select_bracket
from .raceline import RacingLine, TrajectoryTarget
from .vehicle import ErrorState, VehicleState, compute_error_state


@dataclass(frozen=True)
class LateralConfig:
    """Lookahead law d = d_base + k_vd * xdot plus the synthesized schedule."""

    d_base: float
    k_vd: float
    schedule: tuple[VelocityBracket, ...]
    steer_limit: float

    def __post_init__(self) -> None:
        if self.d_base <= 0:
            raise ValueError(f"d_base must be positive, got {self.d_base}")
        if self.k_vd < 0:
            raise ValueError(f"k_vd must be nonnegative, got {self.k_vd}")
        if self.steer_limit <= 0:
            raise ValueError(f"steer_limit must be positive, got {self.steer_limit}")


@dataclass(frozen=True)
class LongitudinalConfig:
    """P + feedforward speed control with brake scaling, rate limits, and the
    gear lookup table (speed thresholds must be strictly increasing)."""

    kp: float
    k_ff: float
    alpha_brake: float
    delta_throttle: float
    delta_brake: float
    gear_table: tuple[tuple[float, int], ...]
    gear_hysteresis: float = 2.0

    def __post_init__(self) -> None:
        if self.kp < 0 or self.k_ff < 0:
            raise ValueError("kp and k_ff must be nonnegative")
        if self.alpha_brake <= 0:
            raise ValueError(f"alpha_brake must be positive, got {self.alpha_brake}")
        if self.delta_throttle <= 0 or self.delta_brake <= 0:
            raise ValueError("rate limits must be positive")
        if not self.gear_table:
            raise ValueError("gear_table must be non-empty")
        thresholds = [entry[0] for entry in self.gear_table]
        if any(b <= a for a, b in zip(thresholds, thresholds[1:])):
            raise ValueError(f"gear thresholds must be strictly increasing, got {thresholds}")
        if self.gear_hysteresis < 0:
            raise ValueError("gear_hysteresis must be nonnegative")


@dataclass(frozen=True)
class Command:
    """Actuator command: steering [rad], normalized throttle and brake in
    [0, 1] (never both nonzero), and the selected gear."""

    delta: float
    throttle: float
    brake: float
    gear: int


@dataclass(frozen=True)
class ControlMemory:
    """Loop state carried between control steps."""

    throttle: float = 0.0
    brake: float = 0.0
    gear: int = 1


@dataclass(frozen=True)
class StepInfo:
    """Diagnostics from one control step, recorded into telemetry."""

    error: ErrorState
    target: TrajectoryTarget
    bracket_index: int
    saturated: bool
    s_vehicle: float
    cte: float
    lookahead_distance: float


def rate_limit(prev: float, desired: float, max_rate: float, dt: float) -> float:
    """Move from prev toward desired by at most max_rate * dt."""
    if max_rate <= 0 or dt <= 0:
        raise ValueError("max_rate and dt must be positive")
    step = desired - prev
    bound = max_rate * dt
    return prev + min(max(step, -bound), bound)


def select_gear(
    gear_table: Sequence[tuple[float, int]],
    vx: float,
    current_gear: int | None = None,
    hysteresis: float = 0.0,
) -> int:
    """Highest gear whose threshold is at or below vx.

    With a current gear, downshifts only happen once the speed falls a full
    hysteresis band below the current gear's threshold, which keeps the
    lookup from chattering around a boundary.
    """
    if not gear_table:
        raise ValueError("gear_table must be non-empty")
    base = gear_table[0][1]
    for threshold, gear in gear_table:
        if threshold <= vx:
            base = gear
        else:
            break
    if current_gear is None or base >= current_gear:
        return base
    current_threshold = next((thr for thr, g in gear_table if g == current_gear), None)
    if current_threshold is not None and vx >= current_threshold - hysteresis:
        return current_gear
    return base


def _lateral_step_full(
    state: VehicleState,
    line: RacingLine,
    cfg: LateralConfig,
) -> tuple[float, StepInfo]:
    d = cfg.d_base + cfg.k_vd * state.xdot
    projection = line.project(state.x, state.y)
    s_target = (projection.s + d) % line.total_length
    tx, ty, psi, kappa = line.point_at(s_target)
    target = TrajectoryTarget(x=tx, y=ty, psi=psi, psidot=kappa * state.xdot)
    error = compute_error_state(state, target)
    schedule = cfg.schedule
    bracket = select_bracket(schedule, state.xdot)
    raw = -float(bracket.gain_array() @ error.as_array())
    delta = min(max(raw, -cfg.steer_limit), cfg.steer_limit)
    info = StepInfo(
        error=error,
        target=target,
        bracket_index=schedule.index(bracket),
        saturated=abs(raw) > cfg.steer_limit,
        s_vehicle=projection.s,
        cte=projection.lateral_offset,
        lookahead_distance=d,
    )
    return delta, info


def lateral_step(state: VehicleState, line: RacingLine, cfg: LateralConfig) -> float:
    """Steering command for the current state (see module docstring)."""
    return _lateral_step_full(state, line, cfg)[0]


def longitudinal_step(
    state: VehicleState,
    v_target: float,
    cfg: LongitudinalConfig,
    prev: tuple[float, float],
    dt: float,
) -> tuple[float, float]:
    """Throttle and brake for the current speed error.

    command = kp*(v_target - xdot) + k_ff*v_target maps to throttle when
    nonnegative and to alpha_brake-scaled brake otherwise. Both channels are
    rate-limited against their previous values and clamped to [0, 1]. While
    one channel is still releasing, the other is held at zero so the two are
    never engaged together without ever violating a channel's rate bound.
    """
    if v_target < 0:
        raise ValueError(f"v_target must be nonnegative, got {v_target}")
    command = cfg.kp * (v_target - state.xdot) + cfg.k_ff * v_target
    if command >= 0.0:
        raw_throttle, raw_brake = min(command, 1.0), 0.0
    else:
        raw_throttle, raw_brake = 0.0, min(-cfg.alpha_brake * command, 1.0)

    prev_throttle, prev_brake = prev
    throttle = rate_limit(prev_throttle, raw_throttle, cfg.delta_throttle, dt)
    brake = rate_limit(prev_brake, raw_brake, cfg.delta_brake, dt)
    if throttle > 0.0 and brake > 0.0:
        if raw_brake > 0.0:
            brake = prev_brake  # throttle still releasing; hold brake out
        else:
            throttle = prev_throttle  # brake still releasing; hold throttle out
    return throttle, brake


def control_step(
    state: VehicleState,
    line: RacingLine,
    v_target: float,
    lat_cfg: LateralConfig,
    lon_cfg: LongitudinalConfig,
    prev: ControlMemory,
    dt: float,
) -> tuple[Command, StepInfo]:
    """One full control cycle: steering, pedals, and gear."""
    delta, info = _lateral_step_full(state, line, lat_cfg)
    throttle, brake = longitudinal_step(state, v_target, lon_cfg, (prev.throttle, prev.brake), dt)
    gear = select_gear(lon_cfg.gear_table, state.xdot, prev.gear, lon_cfg.gear_hysteresis)
    return Command(delta=delta, throttle=throttle, brake=brake, gear=gear), info
