"""Acceptance gate: every criterion as one test printing a PASS/FAIL line.

Run with `pytest tests/test_acceptance.py -v -s` to see the per-criterion
lines; the suite shares the expensive closed-loop runs through module-scoped
fixtures.
"""

import dataclasses
import math
import time

import numpy as np
import pytest
from scipy.linalg import solve_continuous_are

from raceloop.config import ScenarioSettings
from raceloop.control import Command
from raceloop.lqr import care_residual, lqr_gain, solve_care
from raceloop.raceline import curvature_variation, fit_closed_raceline
from raceloop.sim import (
    build_scenario,
    compute_metrics,
    integrate_step,
    run_scenario,
)
from raceloop.vehicle import (
    PacejkaTire,
    VehicleParams,
    VehicleState,
    compute_error_state,
    pacejka_lateral_force,
)

from lines import circle_waypoints


def report(criterion: int, ok: bool, detail: str) -> None:
    print(f"ACCEPTANCE {criterion:2d} {'PASS' if ok else 'FAIL'}: {detail}")
    assert ok, f"criterion {criterion}: {detail}"


def timed_run(name, cfg, line, seed=0, **overrides):
    if overrides:
        cfg = dataclasses.replace(cfg, **overrides)
    scenario = build_scenario(name, cfg, line)
    start = time.perf_counter()
    telemetry = run_scenario(scenario, cfg, seed=seed)
    runtime = time.perf_counter() - start
    metrics = compute_metrics(telemetry, warmup=cfg.sim.warmup)
    return {"telemetry": telemetry, "metrics": metrics, "runtime": runtime, "cfg": cfg}


@pytest.fixture(scope="module")
def run_oval60(cfg, oval_line):
    return timed_run("oval_60", cfg, oval_line)


@pytest.fixture(scope="module")
def run_lane(cfg, oval_line):
    return timed_run("lane_change", cfg, oval_line)


@pytest.fixture(scope="module")
def run_ramp(cfg, oval_line):
    return timed_run("speed_ramp", cfg, oval_line)


def _slalom_cfg(cfg, tire_model):
    scenarios = dict(cfg.scenarios)
    scenarios["slalom"] = dataclasses.replace(cfg.scenarios["slalom"], duration=35.0)
    return dataclasses.replace(
        cfg,
        scenarios=scenarios,
        plant=dataclasses.replace(cfg.plant, tire_model=tire_model),
    )


@pytest.fixture(scope="module")
def run_slalom_linear(cfg, oval_line):
    return timed_run("slalom", _slalom_cfg(cfg, "linear"), oval_line)


@pytest.fixture(scope="module")
def run_slalom_pacejka(cfg, oval_line):
    return timed_run("slalom", _slalom_cfg(cfg, "pacejka"), oval_line)


@pytest.fixture(scope="module")
def run_oval60_resynth(cfg, oval_line):
    resynth_cfg = dataclasses.replace(
        cfg, estimator=dataclasses.replace(cfg.estimator, resynthesize=True)
    )
    return timed_run("oval_60", resynth_cfg, oval_line)


# --- 1: Riccati correctness -----------------------------------------------------


def test_criterion_01_riccati_correctness():
    rng = np.random.default_rng(1001)
    start = time.perf_counter()
    worst_residual_ratio = 0.0
    worst_real_part = -np.inf
    for _ in range(1000):
        a = rng.normal(size=(4, 4))
        b = rng.normal(size=(4, 1))
        m = rng.normal(size=(4, 4))
        q = m.T @ m
        r = np.array([[rng.uniform(0.1, 10.0)]])
        p = solve_care(a, b, q, r)
        residual = care_residual(a, b, q, r, p)
        worst_residual_ratio = max(worst_residual_ratio, residual / (1.0 + np.linalg.norm(p)))
        k = np.linalg.solve(r, b.T @ p)
        worst_real_part = max(worst_real_part, float(np.max(np.linalg.eigvals(a - b @ k).real)))
    elapsed = time.perf_counter() - start

    a2 = np.array([[0.0, 1.0], [0.0, 0.0]])
    b2 = np.array([[0.0], [1.0]])
    gain = lqr_gain(a2, b2, np.eye(2), np.eye(1)).ravel()
    gain_err = float(np.max(np.abs(gain - np.array([1.0, math.sqrt(3.0)]))))
    # cross-check against an independent solver
    p_ref = solve_continuous_are(a2, b2, np.eye(2), np.eye(1))
    ref_gain_err = float(np.max(np.abs(b2.T @ p_ref - gain)))

    ok = (
        worst_residual_ratio < 1e-8
        and worst_real_part < 0.0
        and elapsed < 30.0
        and gain_err < 1e-6
        and ref_gain_err < 1e-9
    )
    report(
        1,
        ok,
        f"1000 CARE solves: residual/(1+|P|) <= {worst_residual_ratio:.2e}, "
        f"max closed-loop Re = {worst_real_part:.2e}, {elapsed:.1f} s; "
        f"double-integrator gain error {gain_err:.2e}",
    )


# --- 2: error-frame oracle ------------------------------------------------------


def _rigid_frame_error(state, target):
    """Brute-force oracle: rotation-matrix frame change, atan2 wrapping."""
    c, s = math.cos(-target.psi), math.sin(-target.psi)
    rot = np.array([[c, -s], [s, c]])
    lateral = (rot @ np.array([target.x - state.x, target.y - state.y]))[1]
    dpsi = math.atan2(math.sin(state.psi - target.psi), math.cos(state.psi - target.psi))
    return np.array([lateral, state.ydot + state.xdot * dpsi, dpsi, state.psidot - target.psidot])


def test_criterion_02_error_frame_oracle():
    from raceloop.raceline import TrajectoryTarget

    rng = np.random.default_rng(1002)
    worst = 0.0
    for _ in range(10_000):
        state = VehicleState(
            x=rng.uniform(-200, 200), y=rng.uniform(-200, 200),
            xdot=rng.uniform(5, 80), ydot=rng.uniform(-3, 3),
            psi=rng.uniform(-math.pi, math.pi), psidot=rng.uniform(-1.5, 1.5),
        )
        target = TrajectoryTarget(
            x=rng.uniform(-200, 200), y=rng.uniform(-200, 200),
            psi=rng.uniform(-math.pi, math.pi), psidot=rng.uniform(-1.5, 1.5),
        )
        diff = compute_error_state(state, target).as_array() - _rigid_frame_error(state, target)
        worst = max(worst, float(np.max(np.abs(diff))))
    report(2, worst < 1e-12, f"10,000 pose pairs, max |impl - oracle| = {worst:.2e}")


# --- 3: high-speed lap calibration ------------------------------------------------


def test_criterion_03_high_speed_lap(run_oval60):
    m = run_oval60["metrics"]
    telemetry = run_oval60["telemetry"]
    ok = (
        not telemetry.aborted
        and m.max_abs_cte <= 1.5
        and m.mean_abs_cte <= 0.6
        and run_oval60["runtime"] < 60.0
    )
    report(
        3,
        ok,
        f"60 m/s oval lap: max|cte| = {m.max_abs_cte:.3f} m (<= 1.5), "
        f"mean|cte| = {m.mean_abs_cte:.3f} m (<= 0.6), runtime {run_oval60['runtime']:.1f} s",
    )


# --- 4: lane change calibration -----------------------------------------------------


def test_criterion_04_lane_change(run_lane):
    telemetry = run_lane["telemetry"]
    m = run_lane["metrics"]
    t = telemetry["t"]
    cte = telemetry["cte"]
    settings = run_lane["cfg"].scenarios["lane_change"]
    settle_t = (
        telemetry.metadata["switch_t"]
        + settings.blend_length / settings.v_target
        + 2.0
    )
    window = cte[t >= settle_t]
    exceeding = window[np.abs(window) > 0.1]
    alternations = int(np.sum(np.diff(np.sign(exceeding)) != 0)) if exceeding.size else 0
    ok = (
        not telemetry.aborted
        and m.max_abs_cte <= 0.8
        and telemetry.switch_count == 1
        and alternations <= 1
        and run_lane["runtime"] < 30.0
    )
    report(
        4,
        ok,
        f"lane change at 25 m/s: max|cte| = {m.max_abs_cte:.3f} m (<= 0.8), "
        f"{telemetry.switch_count} transition(s), {alternations} settled sign change(s), "
        f"runtime {run_lane['runtime']:.1f} s",
    )


# --- 5: speed-ramp stability ----------------------------------------------------------


def test_criterion_05_speed_ramp(run_ramp):
    telemetry = run_ramp["telemetry"]
    crossings = int(np.sum(np.diff(telemetry["bracket_index"]) != 0))
    max_delta_step = float(np.max(np.abs(np.diff(telemetry["delta"]))))
    ok = not telemetry.aborted and crossings >= 2 and max_delta_step <= 0.05
    report(
        5,
        ok,
        f"25 -> 60.5 m/s ramp: {crossings} bracket crossings (>= 2), "
        f"max per-step |d delta| = {max_delta_step:.4f} rad (<= 0.05), "
        f"aborted = {telemetry.aborted}",
    )


# --- 6: steering regime -----------------------------------------------------------------


def test_criterion_06_steering_regime(run_oval60, cfg):
    telemetry = run_oval60["telemetry"]
    mask = telemetry["t"] >= cfg.sim.warmup
    max_steer = float(np.max(np.abs(telemetry["delta"][mask])))
    report(6, max_steer < 0.1, f"steady-state |delta| on the 60 m/s oval = {max_steer:.4f} rad (< 0.1)")


# --- 7: Pacejka properties -----------------------------------------------------------------


def test_criterion_07_pacejka_properties():
    rng = np.random.default_rng(1007)
    worst_slope = 0.0
    for _ in range(1000):
        tire = PacejkaTire(
            B=rng.uniform(4.0, 20.0), C=rng.uniform(1.0, 2.0), D=rng.uniform(0.5, 2.0),
            E=rng.uniform(-2.0, 1.0), mu=rng.uniform(0.3, 2.0), Fz=rng.uniform(1e3, 1e4),
        )
        assert pacejka_lateral_force(tire, 0.0) == 0.0
        for alpha in rng.uniform(1e-4, math.pi / 2, size=4):
            assert pacejka_lateral_force(tire, -alpha) == -pacejka_lateral_force(tire, alpha)
        h = 1e-5 / tire.B
        slope = (pacejka_lateral_force(tire, h) - pacejka_lateral_force(tire, -h)) / (2.0 * h)
        rel = abs(slope - tire.cornering_stiffness) / tire.cornering_stiffness
        worst_slope = max(worst_slope, rel)
    report(
        7,
        worst_slope < 1e-3,
        f"1000 coefficient sets: odd, zero at origin, slope error <= {worst_slope:.2e} (< 1e-3)",
    )


# --- 8: estimator convergence ------------------------------------------------------------------


def test_criterion_08_estimator(run_slalom_linear, run_slalom_pacejka, run_oval60, run_oval60_resynth, cfg):
    lin = run_slalom_linear["telemetry"]
    time_mask = np.argmax(lin["t"] >= 30.0)
    plant = run_slalom_linear["cfg"].plant
    err_f = abs(lin["Caf_hat"][time_mask] - plant.linear_caf) / plant.linear_caf
    err_r = abs(lin["Car_hat"][time_mask] - plant.linear_car) / plant.linear_car

    pac = run_slalom_pacejka["telemetry"]
    ratio_f = pac["Caf_hat"][-1] / cfg.tire_front.cornering_stiffness
    ratio_r = pac["Car_hat"][-1] / cfg.tire_rear.cornering_stiffness

    fixed_max = run_oval60["metrics"].max_abs_cte
    resynth_max = run_oval60_resynth["metrics"].max_abs_cte
    degradation = resynth_max / fixed_max
    rebuilds = run_oval60_resynth["telemetry"].metadata["resynth_count"]

    ok = (
        err_f < 0.005 and err_r < 0.005
        and 0.5 <= ratio_f <= 1.2 and 0.5 <= ratio_r <= 1.2
        and degradation < 1.1
    )
    report(
        8,
        ok,
        f"linear-plant recovery errors ({err_f * 100:.3f}%, {err_r * 100:.3f}%) < 0.5% at 30 s; "
        f"magic-formula estimates at ({ratio_f * 100:.0f}%, {ratio_r * 100:.0f}%) of the linearization; "
        f"re-synthesis ({rebuilds} rebuild(s)) max-CTE ratio {degradation:.3f} (< 1.1)",
    )


# --- 9: raceline continuity -----------------------------------------------------------------------


def test_criterion_09_raceline_continuity():
    line = fit_closed_raceline(circle_waypoints(16, 200.0), sample_spacing=0.5)
    curvature_err = float(np.max(np.abs(np.abs(line.kappa) * 200.0 - 1.0)))
    x0, y0 = line.position(0.0)
    x1, y1 = line.position(line.total_length)
    closure = math.hypot(x1 - x0, y1 - y0)

    from raceloop.tracks import oval_waypoints

    values = [
        curvature_variation(
            fit_closed_raceline(oval_waypoints(), sample_spacing=0.5, smoothing_passes=p)
        )
        for p in range(3)
    ]
    monotone = all(b <= a + 1e-12 for a, b in zip(values, values[1:]))
    ok = curvature_err < 1e-2 and closure < 1e-6 and monotone
    report(
        9,
        ok,
        f"circle-fit curvature error {curvature_err:.2e} (< 1e-2), closure {closure:.2e} m (< 1e-6), "
        f"smoothing passes monotone: {values[0]:.4g} -> {values[1]:.4g} -> {values[2]:.4g}",
    )


# --- 10: determinism and integrator order ------------------------------------------------------------


def _open_loop_final_state(dt_plant: float, duration: float = 10.0) -> np.ndarray:
    params = VehicleParams()
    front = PacejkaTire(B=10.0, C=1.5, D=1.3, E=0.97, mu=1.7, Fz=3270.0)
    rear = PacejkaTire(B=10.0, C=1.5, D=1.3, E=0.97, mu=1.7, Fz=4450.0)
    state = VehicleState(x=0.0, y=0.0, xdot=45.0, ydot=0.0, psi=0.0, psidot=0.0)
    hold = 0.01
    substeps = int(round(hold / dt_plant))
    for k in range(int(round(duration / hold))):
        t = k * hold
        command = Command(
            delta=0.05 * math.sin(0.7 * t),
            throttle=0.3 + 0.1 * math.sin(0.3 * t),
            brake=0.0,
            gear=4,
        )
        for _ in range(substeps):
            state = integrate_step(state, command, params, front, rear, dt_plant)
    return state.as_array()


def test_criterion_10_determinism_and_order(cfg, oval_line, tmp_path):
    scenarios = dict(cfg.scenarios)
    scenarios["repeat"] = ScenarioSettings(kind="constant_speed_lap", v_target=40.0, duration=8.0)
    repeat_cfg = dataclasses.replace(cfg, scenarios=scenarios)
    scenario = build_scenario("repeat", repeat_cfg, oval_line)
    first = run_scenario(scenario, repeat_cfg, seed=314)
    second = run_scenario(scenario, repeat_cfg, seed=314)
    path_a, path_b = tmp_path / "a.csv", tmp_path / "b.csv"
    first.to_csv(path_a)
    second.to_csv(path_b)
    identical = path_a.read_bytes() == path_b.read_bytes()

    coarse = _open_loop_final_state(2e-3)
    mid = _open_loop_final_state(1e-3)
    fine = _open_loop_final_state(5e-4)
    order = math.log2(np.linalg.norm(coarse - mid) / np.linalg.norm(mid - fine))
    ok = identical and 3.5 <= order <= 4.5
    report(
        10,
        ok,
        f"repeated seeded runs byte-identical: {identical}; "
        f"observed integrator convergence order {order:.2f} (in [3.5, 4.5])",
    )


# --- 11: longitudinal contract ----------------------------------------------------------------------


def test_criterion_11_longitudinal_contract(
    run_oval60, run_lane, run_ramp, run_slalom_linear, run_slalom_pacejka, run_oval60_resynth, cfg
):
    runs = {
        "oval_60": run_oval60,
        "lane_change": run_lane,
        "speed_ramp": run_ramp,
        "slalom_linear": run_slalom_linear,
        "slalom_pacejka": run_slalom_pacejka,
        "oval_60_resynth": run_oval60_resynth,
    }
    dt = cfg.sim.dt
    rate_throttle = cfg.longitudinal.delta_throttle * dt + 1e-12
    rate_brake = cfg.longitudinal.delta_brake * dt + 1e-12
    violations = []
    for name, run in runs.items():
        telemetry = run["telemetry"]
        throttle = telemetry["throttle"]
        brake = telemetry["brake"]
        if np.any(throttle * brake != 0.0):
            violations.append(f"{name}: throttle/brake overlap")
        if np.any((throttle < 0) | (throttle > 1) | (brake < 0) | (brake > 1)):
            violations.append(f"{name}: pedal out of [0, 1]")
        if np.max(np.abs(np.diff(throttle))) > rate_throttle:
            violations.append(f"{name}: throttle rate bound broken")
        if np.max(np.abs(np.diff(brake))) > rate_brake:
            violations.append(f"{name}: brake rate bound broken")
    constant_speed = {k: v for k, v in runs.items() if k != "speed_ramp"}
    worst_rmse = max(run["metrics"].speed_tracking_rmse for run in constant_speed.values())
    ok = not violations and worst_rmse < 1.0
    report(
        11,
        ok,
        f"exclusivity/clamps/rate bounds on {len(runs)} runs "
        f"({'; '.join(violations) if violations else 'no violations'}); "
        f"worst constant-speed rmse = {worst_rmse:.3f} m/s (< 1)",
    )


# --- supplementary: stability envelope over the speed range -------------------------------------------


def test_stability_envelope(cfg, oval_line):
    outcomes = {}
    for name in ("oval_25", "oval_40", "oval_50"):
        telemetry = run_scenario(build_scenario(name, cfg, oval_line), cfg, seed=0)
        outcomes[name] = not telemetry.aborted
    print(f"ENVELOPE: completions (60 m/s covered by criterion 3): {outcomes}")
    assert all(outcomes.values())
