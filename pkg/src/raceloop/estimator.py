"""Online cornering-stiffness estimation.

Axle lateral forces are recovered from measured lateral and yaw acceleration
through the rigid-body force/moment balance, then fed to two independent
scalar recursive-least-squares estimators (one per axle) fitting the linear
tire model F = C * alpha with exponential forgetting. Updates are gated on a
minimum slip magnitude: the regression is unidentifiable at zero slip and the
gate prevents covariance windup on straights.

Optionally, when an estimate drifts far enough from the stiffness the gain
schedule was built with, the whole schedule is re-synthesized; the swap is
atomic (a new immutable schedule is returned between control steps).
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np

from .errors import SynthesisError
from .lqr import VelocityBracket, build_bracket_gains
from .vehicle import VX_MIN, VehicleParams, VehicleState, slip_angles

logger = logging.getLogger(__name__)

DEFAULT_FORGETTING = 0.999
#: Slip magnitude below which an axle's RLS update is skipped [rad].
EXCITATION_THRESHOLD = 0.002
#: Slip magnitude above which samples are excluded: the linear tire model the
#: regression fits is only valid below this, and fitting the saturated region
#: would bend the estimate toward the local secant slope [rad].
VALIDITY_LIMIT = 0.03
#: Initial estimate variance [(N/rad)^2]; large enough that the prior washes
#: out within the first few informative samples.
INITIAL_VARIANCE = 1e9


@dataclass(frozen=True)
class AxleForceMeasurement:
    """Recovered axle lateral forces [N] with the slip angles [rad] they were
    produced at, timestamped [s]."""

    F_f: float
    F_r: float
    alpha_f: float
    alpha_r: float
    t: float

    def __post_init__(self) -> None:
        for name in ("F_f", "F_r", "alpha_f", "alpha_r", "t"):
            if not math.isfinite(getattr(self, name)):
                raise ValueError(f"AxleForceMeasurement.{name} must be finite")
        if abs(self.alpha_f) > math.pi / 2 or abs(self.alpha_r) > math.pi / 2:
            raise ValueError("slip angles must lie within [-pi/2, pi/2]")


@dataclass(frozen=True)
class StiffnessEstimate:
    """Per-axle stiffness estimates [N/rad] with their (diagonal) covariance
    and the number of informative updates absorbed so far."""

    Caf_hat: float
    Car_hat: float
    covariance: tuple[tuple[float, float], tuple[float, float]]
    sample_count: int

    def __post_init__(self) -> None:
        cov = np.asarray(self.covariance, dtype=float)
        if cov.shape != (2, 2):
            raise ValueError("covariance must be 2x2")
        if not np.allclose(cov, cov.T) or np.min(np.linalg.eigvalsh(cov)) <= 0.0:
            raise ValueError("covariance must be symmetric positive definite")
        object.__setattr__(self, "covariance", tuple(tuple(float(v) for v in row) for row in cov))

    def covariance_array(self) -> np.ndarray:
        return np.asarray(self.covariance)


def initial_estimate(params: VehicleParams, variance: float = INITIAL_VARIANCE) -> StiffnessEstimate:
    """Prior centered on the configured stiffness values."""
    return StiffnessEstimate(
        Caf_hat=params.Caf,
        Car_hat=params.Car,
        covariance=((variance, 0.0), (0.0, variance)),
        sample_count=0,
    )


def measure_axle_forces(
    state: VehicleState,
    a_y: float,
    psiddot: float,
    delta: float,
    params: VehicleParams,
    t: float = 0.0,
) -> AxleForceMeasurement:
    """Invert the planar force/moment balance for the axle lateral forces.

    Solves [1, 1; lf, -lr] [Ff_proj; Fr] = [m*a_y; Iz*psiddot] where Ff_proj
    is the front force projected through cos(delta); the returned F_f undoes
    the projection. Slip angles are attached from the current state.
    """
    if state.xdot < VX_MIN:
        raise ValueError(f"speed {state.xdot} m/s below the {VX_MIN} m/s guard")
    det = -(params.lr + params.lf)
    rhs_force = params.m * a_y
    rhs_moment = params.Iz * psiddot
    # explicit 2x2 inverse of [[1, 1], [lf, -lr]]
    f_front_projected = (-params.lr * rhs_force - rhs_moment) / det
    f_rear = (-params.lf * rhs_force + rhs_moment) / det
    alpha_f, alpha_r = slip_angles(state, delta, params)
    return AxleForceMeasurement(
        F_f=f_front_projected / math.cos(delta),
        F_r=f_rear,
        alpha_f=alpha_f,
        alpha_r=alpha_r,
        t=t,
    )


def _rls_scalar(c: float, p: float, alpha: float, force: float, forgetting: float) -> tuple[float, float]:
    gain = p * alpha / (forgetting + alpha * p * alpha)
    c_next = c + gain * (force - c * alpha)
    p_next = (p - gain * alpha * p) / forgetting
    return c_next, p_next


def rls_update(
    est: StiffnessEstimate,
    meas: AxleForceMeasurement,
    forgetting: float = DEFAULT_FORGETTING,
    excitation_threshold: float = EXCITATION_THRESHOLD,
    validity_limit: float = VALIDITY_LIMIT,
) -> StiffnessEstimate:
    """One forgetting-factor RLS step per axle on F = C * alpha.

    An axle only updates while its slip magnitude lies inside the
    [excitation_threshold, validity_limit] window: below it the regression is
    unidentifiable, above it the linear model being fitted no longer holds.
    If neither axle updates, the input estimate is returned as-is.
    """
    if not 0.0 < forgetting <= 1.0:
        raise ValueError(f"forgetting factor must lie in (0, 1], got {forgetting}")
    caf, car = est.Caf_hat, est.Car_hat
    cov = est.covariance_array()
    p_f, p_r = cov[0, 0], cov[1, 1]
    updated = False
    if excitation_threshold <= abs(meas.alpha_f) <= validity_limit:
        caf, p_f = _rls_scalar(caf, p_f, meas.alpha_f, meas.F_f, forgetting)
        updated = True
    if excitation_threshold <= abs(meas.alpha_r) <= validity_limit:
        car, p_r = _rls_scalar(car, p_r, meas.alpha_r, meas.F_r, forgetting)
        updated = True
    if not updated:
        return est
    return StiffnessEstimate(
        Caf_hat=caf,
        Car_hat=car,
        covariance=((p_f, 0.0), (0.0, p_r)),
        sample_count=est.sample_count + 1,
    )


def maybe_resynthesize(
    est: StiffnessEstimate,
    schedule: Sequence[VelocityBracket],
    params: VehicleParams,
    threshold: float,
) -> tuple[tuple[VelocityBracket, ...], VehicleParams]:
    """Rebuild the gain schedule when either stiffness estimate has drifted
    more than the relative threshold from the value currently in use.

    Returns the (schedule, params) pair actually in force afterwards: the
    inputs unchanged (same objects) when no rebuild happened or when the
    rebuild failed, otherwise a freshly synthesized schedule with updated
    parameters.
    """
    drift_f = abs(est.Caf_hat - params.Caf) / params.Caf
    drift_r = abs(est.Car_hat - params.Car) / params.Car
    if max(drift_f, drift_r) <= threshold:
        return tuple(schedule), params
    try:
        new_params = replace(params, Caf=est.Caf_hat, Car=est.Car_hat)
        new_schedule = build_bracket_gains(new_params, schedule)
    except (SynthesisError, ValueError) as exc:
        logger.warning("gain re-synthesis failed, keeping previous schedule: %s", exc)
        return tuple(schedule), params
    logger.info(
        "gain schedule re-synthesized at Caf=%.0f Car=%.0f (drift %.1f%%/%.1f%%)",
        est.Caf_hat, est.Car_hat, 100 * drift_f, 100 * drift_r,
    )
    return new_schedule, new_params
