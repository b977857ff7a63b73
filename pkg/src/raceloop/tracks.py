"""Track geometry builders.

The default test track is a flat oval (two straights joined by semicircular
bends). Derived lines (parallel lane offsets, lane-change blends, slalom
weaves) are produced by offsetting an existing line along its normals; for a
laterally offset curve the heading and curvature follow from the source
line's own samples, so no noisy re-differentiation of positions is needed.
"""

from __future__ import annotations

import math
from typing import Callable

import numpy as np

from .errors import RacelineError
from .mathutil import smoothstep_quintic, smoothstep_quintic_rate, wrap_angle_array
from .raceline import RacingLine, Waypoint, fit_closed_raceline


def oval_waypoints(
    half_straight: float = 300.0,
    radius: float = 200.0,
    count: int = 60,
) -> list[Waypoint]:
    """Waypoints on an oval with straights of length 2*half_straight joined
    by semicircles of the given radius, traversed counterclockwise starting
    from the middle of the lower straight."""
    if half_straight <= 0 or radius <= 0 or count < 8:
        raise RacelineError("oval needs positive dimensions and at least 8 waypoints")
    perimeter = 4.0 * half_straight + 2.0 * math.pi * radius
    pts = []
    for s in np.linspace(0.0, perimeter, count, endpoint=False):
        if s < half_straight:
            pts.append(Waypoint(s, 0.0))
        elif s < half_straight + math.pi * radius:
            a = (s - half_straight) / radius
            pts.append(Waypoint(half_straight + radius * math.sin(a), radius * (1.0 - math.cos(a))))
        elif s < 3.0 * half_straight + math.pi * radius:
            pts.append(Waypoint(half_straight - (s - half_straight - math.pi * radius), 2.0 * radius))
        elif s < 3.0 * half_straight + 2.0 * math.pi * radius:
            a = (s - 3.0 * half_straight - math.pi * radius) / radius
            pts.append(Waypoint(-half_straight - radius * math.sin(a), radius * (1.0 + math.cos(a))))
        else:
            pts.append(Waypoint(-half_straight + (s - 3.0 * half_straight - 2.0 * math.pi * radius), 0.0))
    return pts


def build_oval_line(
    half_straight: float = 300.0,
    radius: float = 200.0,
    waypoint_count: int = 60,
    sample_spacing: float = 0.5,
    smoothing_passes: int = 2,
    max_waypoint_shift: float = 0.25,
) -> RacingLine:
    return fit_closed_raceline(
        oval_waypoints(half_straight, radius, waypoint_count),
        sample_spacing=sample_spacing,
        smoothing_passes=smoothing_passes,
        max_waypoint_shift=max_waypoint_shift,
    )


def _resample_uniform(
    s_nodes: np.ndarray,
    x: np.ndarray,
    y: np.ndarray,
    psi: np.ndarray,
    spacing: float,
) -> RacingLine:
    """Build a RacingLine from closed, non-uniform samples with known heading.

    s_nodes has one trailing closure entry (total length). Curvature comes
    from periodic central differences of the resampled unwrapped heading.
    """
    total = float(s_nodes[-1])
    n = max(int(round(total / spacing)), 8)
    ds = total / n
    s = np.arange(n) * ds
    xs = np.interp(s, s_nodes, x)
    ys = np.interp(s, s_nodes, y)
    psi_unwrapped = np.unwrap(psi)
    psi_s = np.interp(s, s_nodes, psi_unwrapped)
    dpsi = np.roll(psi_s, -1) - np.roll(psi_s, 1)
    # the roll wraps the heading by a full turn at the seam; undo it
    turns = psi_unwrapped[-1] - psi_unwrapped[0]
    dpsi[0] += turns
    dpsi[-1] += turns
    kappa = dpsi / (2.0 * ds)
    return RacingLine(s, xs, ys, wrap_angle_array(psi_s), kappa, total)


def variable_offset_line(
    line: RacingLine,
    offset_fn: Callable[[np.ndarray], np.ndarray],
    offset_rate_fn: Callable[[np.ndarray], np.ndarray],
    spacing: float | None = None,
) -> RacingLine:
    """Offset a line along its normals by a smooth arc-length profile o(s).

    offset_rate_fn must be do/ds. The offset profile must be periodic in the
    source length, otherwise the result would not close.
    """
    spacing = spacing or line.spacing
    s_ext = np.concatenate([line.s, [line.total_length]])
    x = np.concatenate([line.x, [line.x[0]]])
    y = np.concatenate([line.y, [line.y[0]]])
    psi = np.concatenate([line.psi, [line.psi[0]]])
    kappa = np.concatenate([line.kappa, [line.kappa[0]]])

    o = np.asarray(offset_fn(s_ext), dtype=float)
    o_rate = np.asarray(offset_rate_fn(s_ext), dtype=float)
    if abs(o[0] - o[-1]) > 1e-9:
        raise RacelineError("offset profile must close on itself around the loop")

    nx, ny = -np.sin(psi), np.cos(psi)
    qx = x + o * nx
    qy = y + o * ny
    # d(q)/ds = tangent*(1 - o*kappa) + normal*o'; its angle and norm give the
    # offset curve's heading and arc-length rate
    along = 1.0 - o * kappa
    if np.any(along <= 0.0):
        raise RacelineError("offset exceeds the local radius of curvature")
    psi_q = np.unwrap(psi) + np.arctan2(o_rate, along)
    seg_rate = np.hypot(along, o_rate)
    s_q = np.concatenate([[0.0], np.cumsum(0.5 * (seg_rate[1:] + seg_rate[:-1]) * np.diff(s_ext))])
    return _resample_uniform(s_q, qx, qy, psi_q, spacing)


def offset_line(line: RacingLine, lateral_offset: float, spacing: float | None = None) -> RacingLine:
    """Parallel line at a constant signed lateral offset (positive left)."""
    return variable_offset_line(
        line,
        lambda s: np.full_like(np.asarray(s, dtype=float), lateral_offset),
        lambda s: np.zeros_like(np.asarray(s, dtype=float)),
        spacing,
    )


def lane_change_line(
    line: RacingLine,
    lateral_offset: float,
    ramp_start_s: float,
    ramp_length: float,
    return_start_s: float | None = None,
    spacing: float | None = None,
) -> RacingLine:
    """Maneuver line: follows the source, blends to the parallel lane over
    [ramp_start_s, ramp_start_s + ramp_length], and (because the line must
    close) blends back near the end of the lap, at return_start_s.

    Scenarios place the return ramp beyond the distance covered in the run so
    only the outbound transition is ever driven.
    """
    total = line.total_length
    if return_start_s is None:
        return_start_s = total - 1.5 * ramp_length
    if not (0.0 < ramp_start_s < ramp_start_s + ramp_length < return_start_s
            and return_start_s + ramp_length < total):
        raise RacelineError("lane-change ramps must fit inside the lap in order")

    def profile(s: np.ndarray) -> np.ndarray:
        s = np.asarray(s, dtype=float)
        up = smoothstep_quintic((s - ramp_start_s) / ramp_length)
        down = smoothstep_quintic((s - return_start_s) / ramp_length)
        return lateral_offset * (up - down)

    def rate(s: np.ndarray) -> np.ndarray:
        s = np.asarray(s, dtype=float)
        up = smoothstep_quintic_rate((s - ramp_start_s) / ramp_length)
        down = smoothstep_quintic_rate((s - return_start_s) / ramp_length)
        return lateral_offset * (up - down) / ramp_length

    return variable_offset_line(line, profile, rate, spacing)


def slalom_line(
    line: RacingLine,
    amplitude: float = 1.2,
    waves: int = 20,
    spacing: float | None = None,
) -> RacingLine:
    """Sinusoidal weave around the source line; an integer wave count keeps
    the result closed. Used to generate persistent lateral excitation."""
    if waves < 1:
        raise RacelineError("slalom needs at least one wave")
    omega = 2.0 * math.pi * waves / line.total_length

    def profile(s: np.ndarray) -> np.ndarray:
        return amplitude * np.sin(omega * np.asarray(s, dtype=float))

    def rate(s: np.ndarray) -> np.ndarray:
        return amplitude * omega * np.cos(omega * np.asarray(s, dtype=float))

    return variable_offset_line(line, profile, rate, spacing)
