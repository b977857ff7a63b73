"""Closed racing-line fitting and geometric queries.

A racing line is a closed curve sampled uniformly in arc length. Fitting
interpolates user waypoints with a periodic quintic spline (parametric
derivatives continuous through fourth order across the seam), optionally
followed by smoothing passes that nudge the control points to reduce the
integral of squared curvature rate while keeping each point within a bounded
distance of the original waypoint.

Projection and lookahead operate on the uniform samples: nearest-sample
search with local quadratic refinement, and arc-length offsets modulo the
total length.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, NamedTuple, Sequence

import numpy as np
from scipy.interpolate import make_interp_spline
from shapely.geometry import LineString, Polygon

from .errors import RacelineError
from .mathutil import wrap_angle, wrap_angle_array

DEFAULT_SAMPLE_SPACING = 0.5
MIN_WAYPOINT_GAP = 1.0
MAX_PROJECTION_DISTANCE = 1000.0
#: How far a smoothing pass may move any control point from its waypoint [m].
DEFAULT_MAX_WAYPOINT_SHIFT = 0.25


@dataclass(frozen=True)
class Waypoint:
    x: float
    y: float


@dataclass(frozen=True)
class TrajectoryTarget:
    """Pose and yaw rate of a point on the line: position [m], heading
    (-pi, pi], and the kinematic yaw rate kappa*vx [rad/s]."""

    x: float
    y: float
    psi: float
    psidot: float


class Projection(NamedTuple):
    s: float
    lateral_offset: float


class RacingLine:
    """Closed curve sampled at uniform arc-length spacing.

    Immutable after construction; safe to share across concurrent readers.
    ``s``, ``x``, ``y``, ``psi``, ``kappa`` are aligned arrays with
    ``s[i] = i * spacing``; the curve wraps at ``total_length``.
    """

    def __init__(
        self,
        s: np.ndarray,
        x: np.ndarray,
        y: np.ndarray,
        psi: np.ndarray,
        kappa: np.ndarray,
        total_length: float,
        exact: "_ExactCurve | None" = None,
    ):
        n = len(s)
        if not (n == len(x) == len(y) == len(psi) == len(kappa)):
            raise RacelineError("sample arrays must have equal length")
        if n < 8:
            raise RacelineError(f"need at least 8 samples, got {n}")
        spacing = total_length / n
        if not np.allclose(s, np.arange(n) * spacing, rtol=1e-9, atol=1e-9 * max(spacing, 1.0)):
            raise RacelineError("samples must be uniformly spaced in arc length starting at 0")
        # own private copies; the sample arrays are frozen below
        self.s = np.array(s, dtype=float)
        self.x = np.array(x, dtype=float)
        self.y = np.array(y, dtype=float)
        self.psi = wrap_angle_array(np.asarray(psi, dtype=float))
        self.kappa = np.array(kappa, dtype=float)
        self.total_length = float(total_length)
        self.spacing = spacing
        self.closed = True
        self._exact = exact
        for arr in (self.x, self.y, self.psi, self.kappa):
            arr.setflags(write=False)
        self.s.setflags(write=False)

    def __len__(self) -> int:
        return len(self.s)

    def point_at(self, s_query: float) -> tuple[float, float, float, float]:
        """(x, y, psi, kappa) at arc length s, interpolated between samples
        and periodic in total_length."""
        sq = s_query % self.total_length
        i = int(sq // self.spacing)
        if i >= len(self.s):  # guard against float edge at the seam
            i = len(self.s) - 1
        j = (i + 1) % len(self.s)
        u = (sq - self.s[i]) / self.spacing
        x = (1.0 - u) * self.x[i] + u * self.x[j]
        y = (1.0 - u) * self.y[i] + u * self.y[j]
        psi = wrap_angle(self.psi[i] + u * wrap_angle(self.psi[j] - self.psi[i]))
        kappa = (1.0 - u) * self.kappa[i] + u * self.kappa[j]
        return x, y, psi, kappa

    def position(self, s_query: float) -> tuple[float, float]:
        x, y, _, _ = self.point_at(s_query)
        return x, y

    def project(self, x: float, y: float) -> Projection:
        """Arc length of the closest point and the signed lateral offset of
        the query (positive to the left of the local tangent).

        The nearest uniform sample is refined by fitting a parabola to the
        squared distances of its neighborhood, bounding the residual lateral
        error by spacing^2/8 times the local curvature.
        """
        dx = self.x - x
        dy = self.y - y
        d2 = dx * dx + dy * dy
        i = int(np.argmin(d2))
        dist = math.sqrt(d2[i])
        if dist > MAX_PROJECTION_DISTANCE:
            raise RacelineError(
                f"query point ({x:.1f}, {y:.1f}) is {dist:.0f} m from the line "
                f"(beyond the {MAX_PROJECTION_DISTANCE:.0f} m limit)"
            )
        n = len(self.s)
        a = d2[(i - 1) % n]
        b = d2[i]
        c = d2[(i + 1) % n]
        denom = a - 2.0 * b + c
        frac = 0.0 if denom <= 0.0 else 0.5 * (a - c) / denom
        frac = min(max(frac, -0.5), 0.5)
        s_star = (self.s[i] + frac * self.spacing) % self.total_length
        px, py, psi, _ = self.point_at(s_star)
        offset = -math.sin(psi) * (x - px) + math.cos(psi) * (y - py)
        return Projection(s=s_star, lateral_offset=offset)

    def distance_to(self, x: float, y: float) -> float:
        """Distance from a point to the curve itself.

        Fitted lines refine against the underlying spline (resolving well
        below the sample spacing, e.g. for waypoint-interpolation checks);
        otherwise this is the distance to the sampled foot point.
        """
        proj = self.project(x, y)
        if self._exact is None:
            px, py, _, _ = self.point_at(proj.s)
            return math.hypot(x - px, y - py)
        return self._exact.distance_to(x, y, proj.s, window=3.0 * self.spacing)

    def lookahead(self, x: float, y: float, d: float, vx: float) -> TrajectoryTarget:
        """Target at arc length d ahead of the query's projection (modulo the
        loop), with yaw rate kappa * vx."""
        if d <= 0.0:
            raise RacelineError(f"lookahead distance must be positive, got {d}")
        proj = self.project(x, y)
        s_target = (proj.s + d) % self.total_length
        tx, ty, psi, kappa = self.point_at(s_target)
        return TrajectoryTarget(x=tx, y=ty, psi=psi, psidot=kappa * vx)

    def to_csv(self, path: str | Path) -> None:
        path = Path(path)
        with path.open("w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["s", "x", "y", "psi", "kappa"])
            for row in zip(self.s, self.x, self.y, self.psi, self.kappa):
                writer.writerow([f"{v:.12g}" for v in row])

    @classmethod
    def from_csv(cls, path: str | Path) -> "RacingLine":
        data = np.genfromtxt(path, delimiter=",", names=True)
        for col in ("s", "x", "y", "psi", "kappa"):
            if col not in (data.dtype.names or ()):
                raise RacelineError(f"line CSV missing column {col!r}")
        s = np.atleast_1d(data["s"])
        spacing = s[1] - s[0]
        total = s[-1] + spacing
        return cls(s, np.atleast_1d(data["x"]), np.atleast_1d(data["y"]),
                   np.atleast_1d(data["psi"]), np.atleast_1d(data["kappa"]), total)


# ---------------------------------------------------------------------------
# fitting


class _ExactCurve:
    """Underlying periodic spline of a fitted line, with its arc-length map,
    for queries that must resolve below the sample spacing."""

    def __init__(self, spline, period: float, t_dense: np.ndarray, s_dense: np.ndarray):
        self.spline = spline
        self.d1 = spline.derivative(1)
        self.d2 = spline.derivative(2)
        self.period = period
        self.t_dense = t_dense
        self.s_dense = s_dense

    def distance_to(self, x: float, y: float, s_hint: float, window: float) -> float:
        # Newton iteration on the perpendicularity condition (p(t)-q).p'(t)=0,
        # started from the sample-level projection; arc length and chord
        # parameter advance at comparable rates, so the hint is within a few
        # sample spacings of the true foot parameter.
        q = np.array([x, y])
        t = float(np.interp(s_hint, self.s_dense, self.t_dense))
        best = math.hypot(*(self.spline(t % self.period) - q))
        for _ in range(40):
            residual = self.spline(t % self.period) - q
            tangent = self.d1(t % self.period)
            g = float(residual @ tangent)
            gp = float(tangent @ tangent + residual @ self.d2(t % self.period))
            if gp <= 0.0:
                break
            step = -g / gp
            step = min(max(step, -0.5 * window), 0.5 * window)
            t += step
            best = min(best, math.hypot(*(self.spline(t % self.period) - q)))
            if abs(step) < 1e-13:
                break
        return best


def _as_waypoint_array(waypoints: Iterable) -> np.ndarray:
    rows = []
    for wp in waypoints:
        if isinstance(wp, Waypoint):
            rows.append((wp.x, wp.y))
        else:
            x, y = wp
            rows.append((float(x), float(y)))
    return np.asarray(rows, dtype=float)


def _validate_waypoints(points: np.ndarray) -> None:
    if points.ndim != 2 or points.shape[1] != 2:
        raise RacelineError("waypoints must be an (n, 2) set of x, y coordinates")
    if len(points) < 4:
        raise RacelineError(f"need at least 4 waypoints, got {len(points)}")
    if not np.all(np.isfinite(points)):
        raise RacelineError("waypoints contain non-finite coordinates")
    closed = np.vstack([points, points[0]])
    gaps = np.hypot(*np.diff(closed, axis=0).T)
    if np.any(gaps < MIN_WAYPOINT_GAP):
        i = int(np.argmin(gaps))
        raise RacelineError(
            f"consecutive waypoints {i} and {(i + 1) % len(points)} are {gaps[i]:.3f} m apart "
            f"(minimum {MIN_WAYPOINT_GAP} m)"
        )
    centered = points - points.mean(axis=0)
    # all-collinear input has a rank-1 coordinate matrix
    if np.linalg.matrix_rank(centered, tol=1e-9 * max(1.0, np.abs(centered).max())) < 2:
        raise RacelineError("waypoints are collinear; cannot fit a closed line")
    if not Polygon(points).is_valid:
        raise RacelineError("waypoints form a self-intersecting polygon")


def _fit_periodic_spline(points: np.ndarray):
    """Periodic quintic spline through the points, chord-length parametrized.
    Returns (spline, parameter period)."""
    closed = np.vstack([points, points[0]])
    chord = np.hypot(*np.diff(closed, axis=0).T)
    t = np.concatenate([[0.0], np.cumsum(chord)])
    spline = make_interp_spline(t, closed, k=5, bc_type="periodic")
    return spline, t[-1]


def _resample_spline(spline, period: float, spacing: float):
    """Uniform arc-length samples of a parametric spline.

    Returns (s, x, y, psi, kappa, total_length, exact); heading and curvature
    come from exact spline derivatives at the resampled parameters.
    """
    # cumulative arc length on a fine parameter grid
    n_dense = max(int(math.ceil(period / spacing)) * 8, 256)
    t_dense = np.linspace(0.0, period, n_dense + 1)
    d1 = spline.derivative(1)(t_dense)
    speed = np.hypot(d1[:, 0], d1[:, 1])
    s_dense = np.concatenate([[0.0], np.cumsum(0.5 * (speed[1:] + speed[:-1]) * np.diff(t_dense))])
    total_length = float(s_dense[-1])

    n = max(int(round(total_length / spacing)), 8)
    ds = total_length / n
    s = np.arange(n) * ds
    t_of_s = np.interp(s, s_dense, t_dense)

    xy = spline(t_of_s)
    v1 = spline.derivative(1)(t_of_s)
    v2 = spline.derivative(2)(t_of_s)
    psi = np.arctan2(v1[:, 1], v1[:, 0])
    kappa = (v1[:, 0] * v2[:, 1] - v1[:, 1] * v2[:, 0]) / (v1[:, 0] ** 2 + v1[:, 1] ** 2) ** 1.5
    exact = _ExactCurve(spline, period, t_dense, s_dense)
    return s, xy[:, 0], xy[:, 1], psi, kappa, total_length, exact


def _line_from_control_points(points: np.ndarray, spacing: float) -> RacingLine:
    spline, period = _fit_periodic_spline(points)
    s, x, y, psi, kappa, total_length, exact = _resample_spline(spline, period, spacing)
    return RacingLine(s, x, y, psi, kappa, total_length, exact=exact)


def _check_simple(line: RacingLine) -> None:
    coords = np.column_stack([line.x, line.y])
    ring = LineString(np.vstack([coords, coords[0]]))
    if not ring.is_simple:
        raise RacelineError("fitted line self-intersects")


def curvature_variation(line: RacingLine) -> float:
    """Integral of squared curvature rate around the loop, by periodic
    central differences over the uniform samples."""
    dk = (np.roll(line.kappa, -1) - np.roll(line.kappa, 1)) / (2.0 * line.spacing)
    return float(np.sum(dk * dk) * line.spacing)


def _smoothing_objective(points: np.ndarray, spacing: float) -> float:
    return curvature_variation(_line_from_control_points(points, spacing))


def _smooth_control_points(
    points: np.ndarray,
    anchors: np.ndarray,
    spacing: float,
    max_shift: float,
    fd_step: float = 1e-3,
) -> np.ndarray:
    """One descent step on the curvature-variation objective.

    Central-difference gradient over control-point coordinates, backtracking
    line search, displacement from the anchoring waypoint clipped to
    max_shift. Never increases the objective (returns the input points if no
    improving step is found).
    """
    j0 = _smoothing_objective(points, spacing)
    grad = np.zeros_like(points)
    for i in range(len(points)):
        for axis in range(2):
            bumped = points.copy()
            bumped[i, axis] += fd_step
            j_plus = _smoothing_objective(bumped, spacing)
            bumped[i, axis] -= 2.0 * fd_step
            j_minus = _smoothing_objective(bumped, spacing)
            grad[i, axis] = (j_plus - j_minus) / (2.0 * fd_step)
    grad_max = np.abs(grad).max()
    if grad_max == 0.0:
        return points
    step = 0.05 / grad_max  # first trial moves the most-pushed point 5 cm
    for _ in range(15):
        candidate = points - step * grad
        shift = candidate - anchors
        dist = np.hypot(shift[:, 0], shift[:, 1])
        over = dist > max_shift
        if np.any(over):
            candidate[over] = anchors[over] + shift[over] * (max_shift / dist[over, None])
        if _smoothing_objective(candidate, spacing) < j0:
            return candidate
        step *= 0.5
    return points


def fit_closed_raceline(
    waypoints: Iterable,
    sample_spacing: float = DEFAULT_SAMPLE_SPACING,
    smoothing_passes: int = 0,
    max_waypoint_shift: float = DEFAULT_MAX_WAYPOINT_SHIFT,
) -> RacingLine:
    """Fit a closed racing line through the waypoints.

    With smoothing_passes = 0 the line interpolates every waypoint (to
    numerical precision); each smoothing pass reduces (never increases) the
    curvature-variation integral while keeping control points within
    max_waypoint_shift of the original waypoints.
    """
    if sample_spacing <= 0.0:
        raise RacelineError(f"sample_spacing must be positive, got {sample_spacing}")
    if smoothing_passes < 0:
        raise RacelineError(f"smoothing_passes must be >= 0, got {smoothing_passes}")
    points = _as_waypoint_array(waypoints)
    _validate_waypoints(points)

    control = points.copy()
    for _ in range(smoothing_passes):
        control = _smooth_control_points(control, points, sample_spacing, max_waypoint_shift)

    line = _line_from_control_points(control, sample_spacing)
    _check_simple(line)
    return line


def project(line: RacingLine, x: float, y: float) -> Projection:
    return line.project(x, y)


def lookahead(line: RacingLine, x: float, y: float, d: float, vx: float) -> TrajectoryTarget:
    return line.lookahead(x, y, d, vx)


def load_waypoints_csv(path: str | Path) -> list[Waypoint]:
    """Two-column x,y CSV; a header row is detected and skipped."""
    path = Path(path)
    rows: list[Waypoint] = []
    with path.open(newline="") as fh:
        for lineno, parts in enumerate(csv.reader(fh)):
            parts = [p.strip() for p in parts if p.strip()]
            if not parts:
                continue
            try:
                x, y = float(parts[0]), float(parts[1])
            except (ValueError, IndexError):
                if lineno == 0:
                    continue  # header
                raise RacelineError(f"{path}:{lineno + 1}: expected two numeric columns, got {parts}")
            rows.append(Waypoint(x, y))
    if not rows:
        raise RacelineError(f"{path}: no waypoints found")
    return rows


def save_waypoints_csv(path: str | Path, waypoints: Sequence[Waypoint]) -> None:
    with Path(path).open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["x", "y"])
        for wp in waypoints:
            writer.writerow([f"{wp.x:.12g}", f"{wp.y:.12g}"])
