"""Exception hierarchy shared across the package.

The CLI maps these onto process exit codes: ConfigError -> 1,
SynthesisError -> 3. A corridor abort is not an exception (the simulator
returns partial telemetry with a failure flag) and maps to exit code 2.
"""


class RaceloopError(Exception):
    """Base class for all package-specific errors."""


class ConfigError(RaceloopError):
    """Invalid configuration file, unknown keys, or out-of-range values."""


class RacelineError(RaceloopError):
    """Bad waypoint input or a geometrically invalid fitted line."""


class SynthesisError(RaceloopError):
    """Gain synthesis failed (non-stabilizable pair or non-convergence)."""


class PlantError(RaceloopError):
    """Plant evaluation outside its valid regime (standstill, non-finite)."""
