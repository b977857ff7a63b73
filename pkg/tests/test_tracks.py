import math

import numpy as np
import pytest

from raceloop.errors import RacelineError
from raceloop.mathutil import wrap_angle
from raceloop.raceline import fit_closed_raceline
from raceloop.tracks import (
    build_oval_line,
    lane_change_line,
    offset_line,
    oval_waypoints,
    slalom_line,
)

from lines import circle_line


def heading_consistency_error(line):
    dpsi = np.array([
        wrap_angle(line.psi[(i + 1) % len(line)] - line.psi[i]) for i in range(len(line))
    ])
    return np.max(np.abs(dpsi - line.kappa * line.spacing)) / line.spacing


def test_oval_waypoints_lie_on_the_oval():
    for wp in oval_waypoints(half_straight=300.0, radius=200.0):
        # lower straight, upper straight, or one of the two bend circles
        on_straight = (abs(wp.y) < 1e-9 or abs(wp.y - 400.0) < 1e-9) and -300.0 <= wp.x <= 300.0
        on_right = abs(math.hypot(wp.x - 300.0, wp.y - 200.0) - 200.0) < 1e-9
        on_left = abs(math.hypot(wp.x + 300.0, wp.y - 200.0) - 200.0) < 1e-9
        assert on_straight or on_right or on_left


def test_oval_line_length_and_curvature():
    line = build_oval_line(smoothing_passes=0)
    expected = 4.0 * 300.0 + 2.0 * math.pi * 200.0
    assert abs(line.total_length - expected) < 1.0
    assert abs(line.kappa).max() < 1.3 / 200.0  # bounded overshoot at the joins


def test_offset_circle_changes_radius():
    base = circle_line(radius=200.0)
    inner = offset_line(base, 3.5)  # positive offset is to the left = inside (ccw)
    assert abs(inner.total_length - 2.0 * math.pi * 196.5) < 0.01
    np.testing.assert_allclose(inner.kappa, 1.0 / 196.5, rtol=1e-4)
    outer = offset_line(base, -3.5)
    assert abs(outer.total_length - 2.0 * math.pi * 203.5) < 0.01


def test_offset_line_stays_parallel():
    base = build_oval_line(smoothing_passes=0)
    lane = offset_line(base, 3.5)
    rng = np.random.default_rng(3)
    for s in rng.uniform(0.0, lane.total_length, 24):
        x, y, _, _ = lane.point_at(float(s))
        assert abs(abs(base.project(x, y).lateral_offset) - 3.5) < 2e-3


def test_offset_rejects_overlap_with_curvature_center():
    base = circle_line(radius=50.0, spacing=0.5)
    with pytest.raises(RacelineError, match="radius of curvature"):
        offset_line(base, 60.0)


def test_derived_lines_keep_invariants():
    base = build_oval_line(smoothing_passes=0)
    for line in (
        offset_line(base, 3.5),
        slalom_line(base, amplitude=1.2, waves=20),
        lane_change_line(base, 3.5, ramp_start_s=1000.0, ramp_length=150.0),
    ):
        assert heading_consistency_error(line) < 1e-3
        x0, y0 = line.position(0.0)
        x1, y1 = line.position(line.total_length)
        assert math.hypot(x1 - x0, y1 - y0) < 1e-9
        assert np.all(np.isfinite(line.kappa))


def test_lane_change_profile_regions():
    base = build_oval_line(smoothing_passes=0)
    maneuver = lane_change_line(base, 3.5, ramp_start_s=1000.0, ramp_length=150.0)
    # before the ramp the maneuver line coincides with the base line
    x, y, _, _ = maneuver.point_at(500.0)
    assert abs(base.project(x, y).lateral_offset) < 1e-3
    # well after the ramp it runs parallel at the full lane offset
    x, y, _, _ = maneuver.point_at(1400.0)
    assert abs(abs(base.project(x, y).lateral_offset) - 3.5) < 2e-3


def test_lane_change_ramps_must_fit():
    base = build_oval_line(smoothing_passes=0)
    with pytest.raises(RacelineError, match="fit inside the lap"):
        lane_change_line(base, 3.5, ramp_start_s=base.total_length - 100.0, ramp_length=150.0)


def test_slalom_weaves_about_the_base():
    base = build_oval_line(smoothing_passes=0)
    weave = slalom_line(base, amplitude=1.2, waves=20)
    offsets = []
    for s in np.linspace(0.0, weave.total_length, 400, endpoint=False):
        x, y, _, _ = weave.point_at(float(s))
        offsets.append(base.project(x, y).lateral_offset)
    offsets = np.asarray(offsets)
    assert abs(offsets).max() == pytest.approx(1.2, abs=0.05)
    assert abs(offsets.mean()) < 0.05  # symmetric about the base line
    assert np.sum(np.diff(np.sign(offsets)) != 0) >= 30  # many crossings


def test_slalom_rejects_zero_waves():
    base = circle_line(radius=200.0)
    with pytest.raises(RacelineError, match="at least one wave"):
        slalom_line(base, amplitude=1.0, waves=0)


def test_fitted_and_derived_lines_share_query_interface():
    wps = oval_waypoints(count=40)
    fitted = fit_closed_raceline(wps, sample_spacing=1.0)
    derived = offset_line(fitted, 2.0)
    for line in (fitted, derived):
        target = line.lookahead(0.0, 0.0, 12.0, 30.0)
        assert math.isfinite(target.psi) and math.isfinite(target.psidot)
