"""raceloop: closed-loop racing-line tracking and vehicle-dynamics simulation.

Gain-scheduled pure-pursuit/LQR lateral control and P+feedforward
longitudinal control around a periodic-spline racing line, driven against a
nonlinear magic-formula-tire plant, with online cornering-stiffness
estimation and a deterministic scenario harness.
"""

from .config import AppConfig, default_config, load_config
from .control import (
    Command,
    ControlMemory,
    LateralConfig,
    LongitudinalConfig,
    control_step,
    lateral_step,
    longitudinal_step,
    rate_limit,
    select_gear,
)
from .errors import ConfigError, PlantError, RacelineError, RaceloopError, SynthesisError
from .estimator import (
    AxleForceMeasurement,
    StiffnessEstimate,
    initial_estimate,
    maybe_resynthesize,
    measure_axle_forces,
    rls_update,
)
from .lqr import (
    VelocityBracket,
    WeightSet,
    build_bracket_gains,
    lqr_gain,
    select_bracket,
    solve_care,
)
from .raceline import (
    RacingLine,
    TrajectoryTarget,
    Waypoint,
    curvature_variation,
    fit_closed_raceline,
    lookahead,
    project,
)
from .sim import (
    Metrics,
    Scenario,
    Telemetry,
    build_scenario,
    build_track_line,
    compute_metrics,
    emit_outputs,
    integrate_step,
    run_scenario,
)
from .vehicle import (
    ErrorState,
    LinearTire,
    PacejkaTire,
    PlantInput,
    VehicleParams,
    VehicleState,
    compute_error_state,
    error_dynamics_matrices,
    linear_lateral_force,
    pacejka_lateral_force,
    plant_derivative,
    slip_angles,
)

__version__ = "0.1.0"
