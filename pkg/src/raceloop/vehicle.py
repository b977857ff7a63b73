"""Vehicle and tire models.

Holds the parameter sets, the error-frame linear dynamics used for gain
synthesis, slip-angle and tire-force computation (linear and magic-formula),
and the nonlinear planar plant derivative integrated by the simulator.

Conventions: SI units throughout, angles in radians, ISO body frame
(x forward, y left, yaw counterclockwise positive). ``xdot``/``ydot`` are
body-frame velocities; ``x``/``y``/``psi`` are inertial.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import PlantError
from .mathutil import wrap_angle

# The linear model has 1/vx terms; below this speed it is meaningless.
VX_MIN = 1.0


@dataclass(frozen=True)
class VehicleParams:
    """Chassis constants for the single-track model.

    m: mass [kg]; Iz: yaw inertia [kg m^2]; lf/lr: CG-to-axle distances [m];
    Caf/Car: front/rear axle cornering stiffness [N/rad]; steer_limit [rad];
    drag_coeff [N s^2/m^2]; drive/brake force limits [N].
    """

    m: float = 787.0
    Iz: float = 1000.0
    lf: float = 1.7
    lr: float = 1.25
    Caf: float = 1.2e5
    Car: float = 1.2e5
    steer_limit: float = 0.3
    drag_coeff: float = 0.9
    drive_force_max: float = 6000.0
    brake_force_max: float = 10000.0

    def __post_init__(self) -> None:
        for name in (
            "m", "Iz", "lf", "lr", "Caf", "Car",
            "steer_limit", "drag_coeff", "drive_force_max", "brake_force_max",
        ):
            value = getattr(self, name)
            if not (math.isfinite(value) and value > 0.0):
                raise ValueError(f"VehicleParams.{name} must be finite and > 0, got {value}")
        if self.lf + self.lr > 5.0:
            raise ValueError(f"wheelbase lf+lr = {self.lf + self.lr} exceeds 5 m sanity bound")
        for name in ("Caf", "Car"):
            value = getattr(self, name)
            if not 1e4 <= value <= 1e6:
                raise ValueError(f"VehicleParams.{name} = {value} outside [1e4, 1e6] N/rad")

    @property
    def wheelbase(self) -> float:
        return self.lf + self.lr


@dataclass(frozen=True)
class PacejkaTire:
    """Magic-formula lateral coefficients for one axle.

    B stiffness factor, C shape factor, D peak value, E curvature factor,
    mu road friction coefficient, Fz vertical load [N].
    """

    B: float
    C: float
    D: float
    E: float
    mu: float
    Fz: float

    def __post_init__(self) -> None:
        for name in ("B", "C", "D", "mu", "Fz"):
            value = getattr(self, name)
            if not (math.isfinite(value) and value > 0.0):
                raise ValueError(f"PacejkaTire.{name} must be finite and > 0, got {value}")
        if not (math.isfinite(self.E) and self.E <= 1.0):
            raise ValueError(f"PacejkaTire.E must be <= 1, got {self.E}")

    @property
    def cornering_stiffness(self) -> float:
        """Small-slip linearization dF/dalpha at alpha = 0."""
        return self.B * self.C * self.D * self.mu * self.Fz

    def lateral_force(self, alpha: float) -> float:
        return pacejka_lateral_force(self, alpha)


@dataclass(frozen=True)
class LinearTire:
    """Linear axle tire F = c_alpha * alpha, used as an alternative plant tire."""

    c_alpha: float

    def __post_init__(self) -> None:
        if not (math.isfinite(self.c_alpha) and self.c_alpha > 0.0):
            raise ValueError(f"LinearTire.c_alpha must be finite and > 0, got {self.c_alpha}")

    @property
    def cornering_stiffness(self) -> float:
        return self.c_alpha

    def lateral_force(self, alpha: float) -> float:
        return self.c_alpha * alpha


@dataclass(frozen=True)
class VehicleState:
    """Inertial pose plus body-frame velocities."""

    x: float
    y: float
    xdot: float
    ydot: float
    psi: float
    psidot: float

    def __post_init__(self) -> None:
        object.__setattr__(self, "psi", wrap_angle(self.psi))

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y, self.xdot, self.ydot, self.psi, self.psidot])

    @classmethod
    def from_array(cls, arr: np.ndarray) -> "VehicleState":
        return cls(*(float(v) for v in arr))


@dataclass(frozen=True)
class ErrorState:
    """Tracking error relative to a trajectory target: lateral offset e1 [m],
    its rate [m/s], yaw error e2 [rad], and yaw-rate error [rad/s]."""

    e1: float
    e1dot: float
    e2: float
    e2dot: float

    def as_array(self) -> np.ndarray:
        return np.array([self.e1, self.e1dot, self.e2, self.e2dot])


@dataclass(frozen=True)
class PlantInput:
    """Actuator forces applied to the plant: steering [rad], drive and brake [N]."""

    delta: float
    drive_force: float = 0.0
    brake_force: float = 0.0


def _require_moving(xdot: float) -> None:
    if xdot < VX_MIN:
        raise PlantError(f"longitudinal speed {xdot} m/s below the {VX_MIN} m/s singularity guard")


def error_dynamics_matrices(params: VehicleParams, vx: float) -> tuple[np.ndarray, np.ndarray]:
    """Continuous-time (A, B) of the error-frame single-track model at speed vx.

    State is (e1, e1dot, e2, e2dot), input is the steering angle. All 1/vx
    entries require vx >= VX_MIN.
    """
    _require_moving(vx)
    m, Iz, lf, lr = params.m, params.Iz, params.lf, params.lr
    caf, car = params.Caf, params.Car
    A = np.zeros((4, 4))
    A[0, 1] = 1.0
    A[1, 1] = -(2.0 * caf + 2.0 * car) / (m * vx)
    A[1, 2] = (2.0 * caf + 2.0 * car) / m
    A[1, 3] = -(2.0 * caf * lf - 2.0 * car * lr) / (m * vx)
    A[2, 3] = 1.0
    A[3, 1] = -(2.0 * lf * caf - 2.0 * lr * car) / (Iz * vx)
    A[3, 2] = (2.0 * lf * caf - 2.0 * lr * car) / Iz
    A[3, 3] = -(2.0 * lf**2 * caf + 2.0 * lr**2 * car) / (Iz * vx)
    B = np.array([[0.0], [2.0 * caf / m], [0.0], [2.0 * lf * caf / Iz]])
    return A, B


def raw_dynamics_matrices(params: VehicleParams, vx: float) -> tuple[np.ndarray, np.ndarray]:
    """(A, B) of the same model in raw coordinates (y, ydot, psi, psidot).

    Differs from the error-frame form by the -vx coupling in row 1 and the
    zero third column; used for linear/nonlinear consistency checks.
    """
    _require_moving(vx)
    m, Iz, lf, lr = params.m, params.Iz, params.lf, params.lr
    caf, car = params.Caf, params.Car
    A = np.zeros((4, 4))
    A[0, 1] = 1.0
    A[1, 1] = -(2.0 * caf + 2.0 * car) / (m * vx)
    A[1, 3] = -vx - (2.0 * caf * lf - 2.0 * car * lr) / (m * vx)
    A[2, 3] = 1.0
    A[3, 1] = -(2.0 * lf * caf - 2.0 * lr * car) / (Iz * vx)
    A[3, 3] = -(2.0 * lf**2 * caf + 2.0 * lr**2 * car) / (Iz * vx)
    B = np.array([[0.0], [2.0 * caf / m], [0.0], [2.0 * lf * caf / Iz]])
    return A, B


def compute_error_state(state: VehicleState, target) -> ErrorState:
    """Error state of the vehicle relative to a trajectory target.

    e1 is the lateral component, in the target's frame, of the vector from
    the vehicle to the target (positive when the target lies to the left of
    the vehicle). Yaw differences are wrapped so the error is continuous at
    the +-pi seam.
    """
    dpsi = wrap_angle(state.psi - target.psi)
    e1 = (target.x - state.x) * math.sin(-target.psi) + (target.y - state.y) * math.cos(-target.psi)
    e1dot = state.ydot + state.xdot * dpsi
    e2dot = state.psidot - target.psidot
    return ErrorState(e1=e1, e1dot=e1dot, e2=dpsi, e2dot=e2dot)


def slip_angles(state: VehicleState, delta: float, params: VehicleParams) -> tuple[float, float]:
    """Front and rear axle slip angles (steer angle minus velocity direction)."""
    _require_moving(state.xdot)
    alpha_f = delta - math.atan2(state.ydot + params.lf * state.psidot, state.xdot)
    alpha_r = -math.atan2(state.ydot - params.lr * state.psidot, state.xdot)
    return alpha_f, alpha_r


def pacejka_lateral_force(tire: PacejkaTire, alpha: float) -> float:
    """Magic-formula lateral force D sin(C atan(B a - E (B a - atan(B a)))) mu Fz."""
    ba = tire.B * alpha
    return tire.D * math.sin(tire.C * math.atan(ba - tire.E * (ba - math.atan(ba)))) * tire.mu * tire.Fz


def linear_lateral_force(c_alpha: float, alpha: float) -> float:
    """Linear tire force C * alpha."""
    return c_alpha * alpha


def plant_derivative(
    state: VehicleState,
    command: PlantInput,
    params: VehicleParams,
    front_tire,
    rear_tire,
) -> np.ndarray:
    """Time derivative of the nonlinear plant state.

    Returns d/dt [x, y, xdot, ydot, psi, psidot]. Lateral forces come from the
    tire objects at the actual slip angles; the front force is projected with
    cos(delta). Longitudinal channel: drive - brake - quadratic drag, with
    lateral-force coupling neglected (valid in the small-steer regime).
    """
    _require_moving(state.xdot)
    if abs(command.delta) > params.steer_limit + 1e-9:
        raise PlantError(
            f"steering command {command.delta} rad exceeds the {params.steer_limit} rad actuator limit"
        )
    alpha_f, alpha_r = slip_angles(state, command.delta, params)
    f_front = front_tire.lateral_force(alpha_f)
    f_rear = rear_tire.lateral_force(alpha_r)
    cos_d = math.cos(command.delta)

    xddot = (command.drive_force - command.brake_force - params.drag_coeff * state.xdot**2) / params.m
    yddot = (f_front * cos_d + f_rear) / params.m - state.xdot * state.psidot
    psiddot = (params.lf * f_front * cos_d - params.lr * f_rear) / params.Iz

    sin_psi, cos_psi = math.sin(state.psi), math.cos(state.psi)
    deriv = np.array([
        state.xdot * cos_psi - state.ydot * sin_psi,
        state.xdot * sin_psi + state.ydot * cos_psi,
        xddot,
        yddot,
        state.psidot,
        psiddot,
    ])
    if not np.all(np.isfinite(deriv)):
        raise PlantError(f"non-finite plant derivative at state {state}")
    return deriv


def lateral_acceleration(
    state: VehicleState,
    command: PlantInput,
    params: VehicleParams,
    front_tire,
    rear_tire,
) -> tuple[float, float]:
    """Measured-style lateral acceleration (yddot + xdot*psidot) and yaw
    acceleration of the plant; what an ideal IMU on the plant would report."""
    deriv = plant_derivative(state, command, params, front_tire, rear_tire)
    return float(deriv[3] + state.xdot * state.psidot), float(deriv[5])
