"""Small numeric helpers used across modules."""

from __future__ import annotations

import math

import numpy as np

TAU = 2.0 * math.pi


def wrap_angle(angle: float) -> float:
    """Wrap an angle to the half-open interval (-pi, pi]."""
    wrapped = math.remainder(angle, TAU)
    # math.remainder returns -pi for odd multiples that round down; fold it.
    return math.pi if wrapped == -math.pi else wrapped


def wrap_angle_array(angles: np.ndarray) -> np.ndarray:
    """Vectorized wrap to (-pi, pi]."""
    wrapped = np.remainder(np.asarray(angles, dtype=float) + math.pi, TAU) - math.pi
    return np.where(wrapped == -math.pi, math.pi, wrapped)


def smoothstep_quintic(u: np.ndarray | float) -> np.ndarray | float:
    """C2 ramp: 0 for u<=0, 1 for u>=1, 6u^5-15u^4+10u^3 between."""
    u = np.clip(u, 0.0, 1.0)
    return u * u * u * (10.0 + u * (6.0 * u - 15.0))


def smoothstep_quintic_rate(u: np.ndarray | float) -> np.ndarray | float:
    """Derivative of :func:`smoothstep_quintic` with respect to u."""
    u_clipped = np.clip(u, 0.0, 1.0)
    inside = u_clipped * u_clipped * (30.0 + u_clipped * (30.0 * u_clipped - 60.0))
    return np.where((np.asarray(u) <= 0.0) | (np.asarray(u) >= 1.0), 0.0, inside)
