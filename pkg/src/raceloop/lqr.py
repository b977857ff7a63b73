"""Continuous-time LQR synthesis and the velocity-bracket gain schedule.

The Riccati equation is solved by Newton-Kleinman iteration: each step solves
a Lyapunov equation for the current stabilizing gain and updates the gain
from the resulting cost matrix. The iteration is seeded with a stabilizing
gain from Bass's shifted-Gramian construction, needs no Schur decomposition
(the Lyapunov solves use a Kronecker-product linear system, cheap at these
state dimensions), and is residual-checked on exit.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np

from .errors import ConfigError, SynthesisError
from .vehicle import VX_MIN, VehicleParams, error_dynamics_matrices

RESIDUAL_RTOL = 1e-9
_MAX_NEWTON_ITERATIONS = 100

# The measured error state reports the lateral offset of the *target* relative
# to the vehicle, while the error-dynamics model (and therefore the synthesized
# gain) is written for the vehicle's offset from the path -- the same quantity
# with opposite sign. Folding the sign into the stored gain keeps the runtime
# feedback law a plain u = -K e on the measured error.
MEASURED_ERROR_SIGNS = np.array([-1.0, 1.0, 1.0, 1.0])


@dataclass(frozen=True)
class WeightSet:
    """LQR weights: diagonal state penalty on (e1, e1dot, e2, e2dot) and the
    scalar steering penalty."""

    q_diag: tuple[float, float, float, float]
    r: float

    def __post_init__(self) -> None:
        if len(self.q_diag) != 4 or any(q < 0 or not math.isfinite(q) for q in self.q_diag):
            raise ValueError(f"q_diag must be 4 nonnegative weights, got {self.q_diag}")
        if not (math.isfinite(self.r) and self.r > 0):
            raise ValueError(f"r must be positive, got {self.r}")
        object.__setattr__(self, "q_diag", tuple(float(q) for q in self.q_diag))


@dataclass(frozen=True)
class VelocityBracket:
    """Half-open speed interval [v_low, v_high) with its weights and, once
    synthesized, the feedback gain row and the speed it was designed at."""

    v_low: float
    v_high: float
    weights: WeightSet
    gain: tuple[float, float, float, float] | None = None
    synth_velocity: float | None = None

    def __post_init__(self) -> None:
        if not self.v_low < self.v_high:
            raise ValueError(f"bracket bounds must satisfy v_low < v_high, got [{self.v_low}, {self.v_high})")
        if self.v_low < 0:
            raise ValueError(f"bracket v_low must be >= 0, got {self.v_low}")
        if self.gain is not None:
            if len(self.gain) != 4 or any(not math.isfinite(g) for g in self.gain):
                raise ValueError(f"gain must be 4 finite entries, got {self.gain}")
            object.__setattr__(self, "gain", tuple(float(g) for g in self.gain))

    def contains(self, vx: float) -> bool:
        return self.v_low <= vx < self.v_high

    def gain_array(self) -> np.ndarray:
        if self.gain is None:
            raise SynthesisError(f"bracket [{self.v_low}, {self.v_high}) has no synthesized gain")
        return np.asarray(self.gain)


def _solve_lyapunov_transposed(m: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    """Solve M^T P + P M = -rhs via the Kronecker-product formulation."""
    n = m.shape[0]
    eye = np.eye(n)
    system = np.kron(eye, m.T) + np.kron(m.T, eye)
    try:
        vec = np.linalg.solve(system, -rhs.flatten(order="F"))
    except np.linalg.LinAlgError as exc:
        raise SynthesisError(f"Lyapunov solve failed: {exc}") from exc
    p = vec.reshape((n, n), order="F")
    return 0.5 * (p + p.T)


def _solve_gramian(m: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    """Solve M X + X M^T = rhs."""
    return _solve_lyapunov_transposed(m.T, -rhs)


def _is_hurwitz(m: np.ndarray) -> bool:
    return bool(np.max(np.linalg.eigvals(m).real) < 0.0)


def _stabilizing_gain(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Initial stabilizing gain (Bass): with beta shifting every eigenvalue of
    A into the right half plane, the Gramian-like solution X of
    (A + beta I) X + X (A + beta I)^T = 2 B B^T yields K0 = B^T X^-1 with
    A - B K0 Hurwitz."""
    n, m_in = a.shape[0], b.shape[1]
    eigs = np.linalg.eigvals(a)
    if np.max(eigs.real) < 0.0:
        return np.zeros((m_in, n))
    beta = 1.0 + max(0.0, -float(np.min(eigs.real)))
    for _ in range(4):
        shifted = a + beta * np.eye(n)
        try:
            x = _solve_gramian(shifted, 2.0 * b @ b.T)
            k0 = np.linalg.solve(x, b).T
        except (np.linalg.LinAlgError, SynthesisError):
            beta *= 2.0
            continue
        if _is_hurwitz(a - b @ k0):
            return k0
        beta *= 2.0
    raise SynthesisError("could not construct a stabilizing initial gain; pair may not be stabilizable")


def _check_detectable(a: np.ndarray, q: np.ndarray) -> None:
    """PBH test: every eigenvalue of A with nonnegative real part must be
    visible through Q, or no stabilizing Riccati solution exists."""
    scale = max(float(np.linalg.norm(a)), 1.0)
    q_scale = max(float(np.linalg.norm(q)), 1e-300)
    eigvals, eigvecs = np.linalg.eig(a)
    for i, lam in enumerate(eigvals):
        if lam.real >= -1e-9 * scale:
            v = eigvecs[:, i]
            if np.linalg.norm(q @ v) <= 1e-10 * q_scale * np.linalg.norm(v):
                raise SynthesisError(
                    f"mode at eigenvalue {lam:.3g} is invisible to Q; (A, Q^1/2) is undetectable"
                )


def care_residual(a: np.ndarray, b: np.ndarray, q: np.ndarray, r: np.ndarray, p: np.ndarray) -> float:
    """Frobenius norm of A^T P + P A - P B R^-1 B^T P + Q."""
    res = a.T @ p + p @ a - p @ b @ np.linalg.solve(r, b.T @ p) + q
    return float(np.linalg.norm(res))


def solve_care(
    a: np.ndarray,
    b: np.ndarray,
    q: np.ndarray,
    r: np.ndarray,
    rtol: float = RESIDUAL_RTOL,
) -> np.ndarray:
    """Stabilizing solution of A^T P + P A - P B R^-1 B^T P + Q = 0.

    Raises SynthesisError if the pair cannot be stabilized or the iteration
    fails to reach the residual tolerance.
    """
    a = np.atleast_2d(np.asarray(a, dtype=float))
    b = np.asarray(b, dtype=float).reshape(a.shape[0], -1)
    q = np.atleast_2d(np.asarray(q, dtype=float))
    r = np.atleast_2d(np.asarray(r, dtype=float))
    if np.linalg.norm(q - q.T) > 1e-12 * (1.0 + np.linalg.norm(q)) or np.min(np.linalg.eigvalsh(q)) < -1e-10:
        raise SynthesisError("Q must be symmetric positive semidefinite")
    if np.linalg.norm(r - r.T) > 1e-12 * (1.0 + np.linalg.norm(r)) or np.min(np.linalg.eigvalsh(r)) <= 0.0:
        raise SynthesisError("R must be symmetric positive definite")
    _check_detectable(a, q)

    k = _stabilizing_gain(a, b)
    p = np.zeros_like(a)
    for _ in range(_MAX_NEWTON_ITERATIONS):
        closed = a - b @ k
        p = _solve_lyapunov_transposed(closed, q + k.T @ r @ k)
        k_next = np.linalg.solve(r, b.T @ p)
        residual = care_residual(a, b, q, r, p)
        if residual < rtol * (1.0 + np.linalg.norm(p)):
            if not _is_hurwitz(a - b @ k_next):
                raise SynthesisError(
                    "converged to a non-stabilizing solution; (A, Q^1/2) is likely undetectable"
                )
            return p
        k = k_next
    raise SynthesisError(
        f"Riccati iteration did not converge; last residual {residual:.3e} "
        f"against tolerance {rtol * (1.0 + np.linalg.norm(p)):.3e}"
    )


def lqr_gain(a: np.ndarray, b: np.ndarray, q: np.ndarray, r: np.ndarray) -> np.ndarray:
    """Optimal feedback gain K = R^-1 B^T P; applied downstream as u = -K e."""
    b = np.asarray(b, dtype=float).reshape(np.atleast_2d(a).shape[0], -1)
    r = np.atleast_2d(np.asarray(r, dtype=float))
    p = solve_care(a, b, q, r)
    return np.linalg.solve(r, b.T @ p)


def validate_schedule(schedule: Sequence[VelocityBracket]) -> None:
    """Brackets must be disjoint, ordered, and cover [0, inf)."""
    if not schedule:
        raise ConfigError("bracket schedule is empty")
    ordered = sorted(schedule, key=lambda br: br.v_low)
    if ordered[0].v_low != 0.0:
        raise ConfigError(f"schedule must start at 0 m/s, first bracket starts at {ordered[0].v_low}")
    for prev, nxt in zip(ordered, ordered[1:]):
        if nxt.v_low != prev.v_high:
            kind = "gap" if nxt.v_low > prev.v_high else "overlap"
            raise ConfigError(
                f"schedule {kind} between [{prev.v_low}, {prev.v_high}) and [{nxt.v_low}, {nxt.v_high})"
            )
    if not math.isinf(ordered[-1].v_high):
        raise ConfigError(f"schedule must extend to infinity, last bracket ends at {ordered[-1].v_high}")


def bracket_synth_velocity(bracket: VelocityBracket, vx_min: float = VX_MIN) -> float:
    """Design speed: bracket midpoint, or the lower bound when the bracket is
    unbounded above, floored at the model's minimum speed."""
    if math.isinf(bracket.v_high):
        velocity = bracket.v_low
    else:
        velocity = 0.5 * (bracket.v_low + bracket.v_high)
    return max(velocity, vx_min)


def build_bracket_gains(
    params: VehicleParams,
    schedule: Sequence[VelocityBracket],
    vx_min: float = VX_MIN,
) -> tuple[VelocityBracket, ...]:
    """Synthesize the feedback gain of every bracket in the schedule.

    Fails as a whole (identifying the bracket) if any synthesis fails. The
    returned schedule is a fresh immutable tuple, so a caller can swap it in
    atomically.
    """
    validate_schedule(schedule)
    out = []
    for bracket in sorted(schedule, key=lambda br: br.v_low):
        velocity = bracket_synth_velocity(bracket, vx_min)
        a, b = error_dynamics_matrices(params, velocity)
        q = np.diag(bracket.weights.q_diag)
        r = np.array([[bracket.weights.r]])
        try:
            gain_row = lqr_gain(a, b, q, r).ravel()
        except SynthesisError as exc:
            raise SynthesisError(
                f"gain synthesis failed for bracket [{bracket.v_low}, {bracket.v_high}): {exc}"
            ) from exc
        gain_row = gain_row * MEASURED_ERROR_SIGNS
        out.append(replace(bracket, gain=tuple(gain_row), synth_velocity=velocity))
    return tuple(out)


def select_bracket(schedule: Sequence[VelocityBracket], vx: float) -> VelocityBracket:
    """The unique bracket with v_low <= vx < v_high."""
    if vx < 0:
        raise ValueError(f"speed must be nonnegative, got {vx}")
    for bracket in schedule:
        if bracket.contains(vx):
            return bracket
    raise ConfigError(f"no bracket covers speed {vx} m/s; schedule does not cover [0, inf)")
