"""Configuration: dataclass defaults, YAML loading, and validation.

A config file is a nested key/value document whose sections mirror the
dataclasses below. Values given in the file override the defaults; any key
that does not correspond to a field is an error. All units SI, angles in
radians.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping

import yaml

from .errors import ConfigError
from .lqr import VelocityBracket, WeightSet
from .vehicle import PacejkaTire, VehicleParams

SCENARIO_KINDS = ("constant_speed_lap", "speed_ramp", "lane_change", "slalom")
SPEED_RANGE = (5.0, 90.0)


@dataclass(frozen=True)
class TrackConfig:
    """Default oval geometry, or a waypoint CSV to fit instead."""

    half_straight: float = 300.0
    radius: float = 200.0
    waypoint_count: int = 60
    sample_spacing: float = 0.5
    smoothing_passes: int = 2
    max_waypoint_shift: float = 0.25
    waypoints_file: str | None = None


@dataclass(frozen=True)
class NoiseConfig:
    """Zero-mean Gaussian noise on the estimator's acceleration inputs."""

    sigma_ay: float = 0.05
    sigma_psiddot: float = 0.01


@dataclass(frozen=True)
class PlantConfig:
    """Simulated-truth plant options. tire_model selects magic-formula tires
    (the default) or linear tires with the stiffness values below."""

    tire_model: str = "pacejka"
    linear_caf: float = 1.05e5
    linear_car: float = 1.45e5
    substeps: int = 10

    def __post_init__(self) -> None:
        if self.tire_model not in ("pacejka", "linear"):
            raise ConfigError(f"plant.tire_model must be 'pacejka' or 'linear', got {self.tire_model!r}")
        if self.substeps < 1:
            raise ConfigError("plant.substeps must be >= 1")


@dataclass(frozen=True)
class LateralSettings:
    d_base: float = 3.0
    k_vd: float = 0.1


@dataclass(frozen=True)
class BracketSettings:
    """One schedule row; v_high may be the string 'inf'."""

    v_low: float
    v_high: float
    q_diag: tuple[float, float, float, float]
    r: float

    def to_bracket(self) -> VelocityBracket:
        return VelocityBracket(
            v_low=self.v_low,
            v_high=self.v_high,
            weights=WeightSet(q_diag=tuple(self.q_diag), r=self.r),
        )


@dataclass(frozen=True)
class LongitudinalSettings:
    kp: float = 0.5
    k_ff: float = 0.009
    alpha_brake: float = 1.0
    delta_throttle: float = 1.0
    delta_brake: float = 1.0
    gear_thresholds: tuple[float, ...] = (0.0, 15.0, 30.0, 45.0, 58.0)
    gear_hysteresis: float = 2.0


@dataclass(frozen=True)
class EstimatorSettings:
    enabled: bool = True
    forgetting: float = 0.999
    excitation_threshold: float = 0.002
    validity_limit: float = 0.03
    warmup_samples: int = 200
    resynthesize: bool = False
    resynth_threshold: float = 0.1
    resynth_period_s: float = 1.0
    noise: NoiseConfig = field(default_factory=NoiseConfig)


@dataclass(frozen=True)
class SimSettings:
    control_rate_hz: float = 100.0
    corridor: float = 20.0
    warmup: float = 5.0
    start_speed_factor: float = 0.8
    start_speed_floor: float = 10.0

    def __post_init__(self) -> None:
        if self.control_rate_hz <= 0 or self.corridor <= 0:
            raise ConfigError("control rate and corridor must be positive")

    @property
    def dt(self) -> float:
        return 1.0 / self.control_rate_hz


@dataclass(frozen=True)
class ScenarioSettings:
    """One named scenario. Speeds in m/s; duration in seconds (or laps, which
    converts using the nominal lap time)."""

    kind: str
    v_target: float | None = None
    v_start: float | None = None
    v_end: float | None = None
    duration: float | None = None
    laps: float | None = None
    switch_trigger_s: float = 1000.0
    lane_offset: float = 3.5
    blend_length: float = 150.0
    slalom_amplitude: float = 1.2
    slalom_waves: int = 20

    def __post_init__(self) -> None:
        if self.kind not in SCENARIO_KINDS:
            raise ConfigError(f"scenario kind must be one of {SCENARIO_KINDS}, got {self.kind!r}")
        if self.duration is None and self.laps is None:
            raise ConfigError("scenario needs a duration or a lap count")
        if self.duration is not None and self.duration <= 0:
            raise ConfigError("scenario duration must be positive")
        if self.kind == "speed_ramp":
            speeds = (self.v_start, self.v_end)
            if any(v is None for v in speeds):
                raise ConfigError("speed_ramp needs v_start and v_end")
        else:
            speeds = (self.v_target,)
            if self.v_target is None:
                raise ConfigError(f"{self.kind} needs v_target")
        for v in speeds:
            if not SPEED_RANGE[0] <= float(v) <= SPEED_RANGE[1]:
                raise ConfigError(f"scenario speeds must lie within {SPEED_RANGE}, got {v}")


def _default_brackets() -> tuple[BracketSettings, ...]:
    q = (1.0, 0.1, 2.0, 0.1)
    return (
        BracketSettings(v_low=0.0, v_high=20.0, q_diag=q, r=0.5),
        BracketSettings(v_low=20.0, v_high=35.0, q_diag=q, r=1.0),
        BracketSettings(v_low=35.0, v_high=50.0, q_diag=q, r=2.0),
        BracketSettings(v_low=50.0, v_high=math.inf, q_diag=q, r=5.0),
    )


def _default_scenarios() -> dict[str, ScenarioSettings]:
    return {
        "oval_25": ScenarioSettings(kind="constant_speed_lap", v_target=25.0, duration=110.0),
        "oval_40": ScenarioSettings(kind="constant_speed_lap", v_target=40.0, duration=70.0),
        "oval_50": ScenarioSettings(kind="constant_speed_lap", v_target=50.0, duration=60.0),
        "oval_60": ScenarioSettings(kind="constant_speed_lap", v_target=60.0, duration=50.0),
        "speed_ramp": ScenarioSettings(kind="speed_ramp", v_start=25.0, v_end=60.5, duration=120.0),
        "lane_change": ScenarioSettings(
            kind="lane_change", v_target=25.0, duration=60.0,
            switch_trigger_s=1000.0, lane_offset=3.5, blend_length=150.0,
        ),
        "slalom": ScenarioSettings(
            kind="slalom", v_target=25.0, duration=60.0,
            slalom_amplitude=1.2, slalom_waves=20,
        ),
    }


@dataclass(frozen=True)
class AppConfig:
    vehicle: VehicleParams = field(default_factory=VehicleParams)
    tire_front: PacejkaTire = field(
        default_factory=lambda: PacejkaTire(B=10.0, C=1.5, D=1.3, E=0.97, mu=1.7, Fz=3270.0)
    )
    tire_rear: PacejkaTire = field(
        default_factory=lambda: PacejkaTire(B=10.0, C=1.5, D=1.3, E=0.97, mu=1.7, Fz=4450.0)
    )
    plant: PlantConfig = field(default_factory=PlantConfig)
    track: TrackConfig = field(default_factory=TrackConfig)
    lateral: LateralSettings = field(default_factory=LateralSettings)
    brackets: tuple[BracketSettings, ...] = field(default_factory=_default_brackets)
    longitudinal: LongitudinalSettings = field(default_factory=LongitudinalSettings)
    estimator: EstimatorSettings = field(default_factory=EstimatorSettings)
    sim: SimSettings = field(default_factory=SimSettings)
    scenarios: dict[str, ScenarioSettings] = field(default_factory=_default_scenarios)


def default_config() -> AppConfig:
    return AppConfig()


# ---------------------------------------------------------------------------
# dict <-> dataclass plumbing


def _coerce(value: Any, target_type: Any, path: str) -> Any:
    origin = getattr(target_type, "__origin__", None)
    args = getattr(target_type, "__args__", ())
    if target_type is float:
        if isinstance(value, str) and value.lower() in ("inf", "infinity", ".inf"):
            return math.inf
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{path}: expected a number, got {value!r}")
        return float(value)
    if target_type is int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{path}: expected an integer, got {value!r}")
        return value
    if target_type is bool:
        if not isinstance(value, bool):
            raise ConfigError(f"{path}: expected true/false, got {value!r}")
        return value
    if target_type is str:
        if not isinstance(value, str):
            raise ConfigError(f"{path}: expected a string, got {value!r}")
        return value
    if origin is tuple:
        if not isinstance(value, (list, tuple)):
            raise ConfigError(f"{path}: expected a list, got {value!r}")
        element = args[0]
        if len(args) == 2 and args[1] is Ellipsis:
            return tuple(_coerce(v, element, f"{path}[{i}]") for i, v in enumerate(value))
        if len(value) != len(args):
            raise ConfigError(f"{path}: expected {len(args)} entries, got {len(value)}")
        return tuple(_coerce(v, t, f"{path}[{i}]") for i, (v, t) in enumerate(zip(value, args)))
    if _is_optional(target_type):
        if value is None:
            return None
        inner = next(t for t in args if t is not type(None))
        return _coerce(value, inner, path)
    if dataclasses.is_dataclass(target_type):
        if not isinstance(value, Mapping):
            raise ConfigError(f"{path}: expected a mapping, got {value!r}")
        return _dataclass_from_dict(target_type, value, base=None, path=path)
    raise ConfigError(f"{path}: unsupported config value {value!r}")


def _is_optional(tp: Any) -> bool:
    args = getattr(tp, "__args__", ())
    return type(None) in args


def _dataclass_from_dict(cls: type, data: Mapping[str, Any], base: Any, path: str) -> Any:
    import typing

    hints = typing.get_type_hints(cls)
    field_names = {f.name for f in dataclasses.fields(cls)}
    unknown = set(data) - field_names
    if unknown:
        raise ConfigError(f"{path}: unknown key(s) {sorted(unknown)}; known keys: {sorted(field_names)}")
    kwargs = {}
    for f in dataclasses.fields(cls):
        if f.name in data:
            raw = data[f.name]
            target = hints[f.name]
            if dataclasses.is_dataclass(target) and isinstance(raw, Mapping):
                nested_base = getattr(base, f.name, None) if base is not None else None
                kwargs[f.name] = _dataclass_from_dict(target, raw, nested_base, f"{path}.{f.name}")
            else:
                kwargs[f.name] = _coerce(raw, target, f"{path}.{f.name}")
        elif base is not None:
            kwargs[f.name] = getattr(base, f.name)
    try:
        return cls(**kwargs)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{path}: {exc}") from exc


def config_from_dict(data: Mapping[str, Any]) -> AppConfig:
    """Build an AppConfig from a nested dict, overriding the defaults.

    Unknown keys anywhere in the document are errors. The scenarios section
    replaces same-named defaults and may add new named scenarios.
    """
    if not isinstance(data, Mapping):
        raise ConfigError("config document must be a mapping of sections")
    data = dict(data)
    scenarios_raw = data.pop("scenarios", None)
    brackets_raw = data.pop("brackets", None)
    cfg = _dataclass_from_dict(AppConfig, data, default_config(), "config")
    if brackets_raw is not None:
        if not isinstance(brackets_raw, list):
            raise ConfigError("config.brackets: expected a list of bracket rows")
        brackets = tuple(
            _dataclass_from_dict(BracketSettings, row, None, f"config.brackets[{i}]")
            for i, row in enumerate(brackets_raw)
        )
        cfg = dataclasses.replace(cfg, brackets=brackets)
    if scenarios_raw is not None:
        if not isinstance(scenarios_raw, Mapping):
            raise ConfigError("config.scenarios: expected a mapping of scenario names")
        scenarios = dict(_default_scenarios())
        for name, row in scenarios_raw.items():
            scenarios[name] = _dataclass_from_dict(
                ScenarioSettings, row, scenarios.get(name), f"config.scenarios.{name}"
            )
        cfg = dataclasses.replace(cfg, scenarios=scenarios)
    return cfg


def load_config(path: str | Path | None) -> AppConfig:
    """Load a YAML config file; None returns the built-in defaults."""
    if path is None:
        return default_config()
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    try:
        with path.open() as fh:
            data = yaml.safe_load(fh)
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: invalid YAML: {exc}") from exc
    if data is None:
        return default_config()
    return config_from_dict(data)


def _to_jsonable(obj: Any) -> Any:
    if dataclasses.is_dataclass(obj) and not isinstance(obj, type):
        return {f.name: _to_jsonable(getattr(obj, f.name)) for f in dataclasses.fields(obj)}
    if isinstance(obj, dict):
        return {k: _to_jsonable(v) for k, v in sorted(obj.items())}
    if isinstance(obj, (list, tuple)):
        return [_to_jsonable(v) for v in obj]
    if isinstance(obj, float) and math.isinf(obj):
        return "inf"
    return obj


def config_to_dict(cfg: AppConfig) -> dict[str, Any]:
    return _to_jsonable(cfg)


def config_hash(cfg: AppConfig) -> str:
    """Short stable digest of the full configuration."""
    canonical = json.dumps(config_to_dict(cfg), sort_keys=True)
    return hashlib.sha256(canonical.encode()).hexdigest()[:12]
