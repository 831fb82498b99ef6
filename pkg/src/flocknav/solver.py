"""Local solver for a packed instance: projected gradient inside, penalty and
augmented-Lagrangian loop outside.

Obstacle avoidance enters as equality residuals handled by a growing quadratic
penalty; the velocity box and the early-stage separation inequalities carry
multiplier estimates updated between inner solves.  Everything is
deterministic: identical inputs and settings give bit-identical outcomes.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import mpc
from .geometry import residual_gradients_along, residuals_along
from .mpc import MpcConfig, MpcInstance

STATUS_CONVERGED = "converged"
STATUS_MAX_ITERATIONS = "max_iterations"
STATUS_INFEASIBLE = "infeasible_tolerance"

_STEP_FLOOR = 1e-18
_STEP_CEIL = 1e12


class SolverError(RuntimeError):
    """Raised when the objective turns non-finite (corrupt instance data)."""


@dataclass(frozen=True)
class SolverSettings:
    inner_tolerance: float = 1e-4
    outer_tolerance: float = 1e-3
    initial_penalty: float = 10.0
    penalty_growth: float = 10.0
    max_inner_iterations: int = 500
    max_outer_iterations: int = 10

    def __post_init__(self):
        if self.inner_tolerance <= 0.0 or self.outer_tolerance <= 0.0:
            raise ValueError("tolerances must be positive")
        if self.initial_penalty <= 0.0:
            raise ValueError("initial penalty must be positive")
        if self.penalty_growth <= 1.0:
            raise ValueError("penalty growth factor must exceed 1")
        if self.max_inner_iterations < 1 or self.max_outer_iterations < 1:
            raise ValueError("iteration caps must be at least 1")


@dataclass(frozen=True)
class SolveOutcome:
    inputs: np.ndarray  # (T, 2), inside the input box exactly
    status: str
    cost: float
    max_residual: float
    inner_iterations: int
    outer_iterations: int
    residual_history: tuple[float, ...]

    @property
    def converged(self) -> bool:
        return self.status == STATUS_CONVERGED


@dataclass(frozen=True)
class InnerResult:
    point: np.ndarray
    iterations: int
    converged: bool
    stationarity: float


def project_box(u, radius: float) -> np.ndarray:
    """Componentwise clamp to [-radius, radius]; idempotent."""
    if radius <= 0.0:
        raise ValueError("box radius must be positive")
    return np.clip(np.asarray(u, dtype=float), -radius, radius)


def inner_solve(objective, gradient, box_radius: float, warm_start, settings: SolverSettings) -> InnerResult:
    """Projected gradient with backtracking; monotone descent from the warm start.

    Terminates when the projected-gradient mapping norm drops below the inner
    tolerance or the iteration cap is reached.  Step sizes start at 1, shrink
    by halving until the standard sufficient-decrease condition holds, and are
    re-seeded from a Barzilai-Borwein estimate between iterations.
    """
    u = project_box(warm_start, box_radius)
    f = float(objective(u))
    if not np.isfinite(f):
        raise SolverError("objective is non-finite at the warm start")
    step = 1.0
    prev_u = None
    prev_g = None
    iterations = 0
    stationarity = np.inf
    for _ in range(settings.max_inner_iterations):
        iterations += 1
        g = np.asarray(gradient(u), dtype=float)
        if prev_u is not None:
            du = u - prev_u
            dg = g - prev_g
            curvature = float(np.vdot(du, dg))
            if curvature > 0.0:
                step = float(np.vdot(du, du)) / curvature
            else:
                step *= 2.0
        step = float(min(max(step, _STEP_FLOOR), _STEP_CEIL))
        prev_u, prev_g = u, g

        while True:
            candidate = project_box(u - step * g, box_radius)
            d = candidate - u
            sq = float(np.vdot(d, d))
            if sq == 0.0:
                f_candidate = f
                break
            f_candidate = float(objective(candidate))
            if np.isfinite(f_candidate) and f_candidate <= f + float(np.vdot(g, d)) + sq / (2.0 * step):
                break
            step *= 0.5
            if step < _STEP_FLOOR:
                raise SolverError("line search stalled (objective may be corrupt)")
        stationarity = np.sqrt(sq) / step
        u, f = candidate, f_candidate
        if stationarity <= settings.inner_tolerance:
            return InnerResult(point=u, iterations=iterations, converged=True, stationarity=stationarity)
    return InnerResult(point=u, iterations=iterations, converged=False, stationarity=stationarity)


class _AugmentedObjective:
    """Smooth cost + obstacle penalty + AL terms, with a one-point memo."""

    def __init__(self, instance: MpcInstance, config: MpcConfig, penalty: float,
                 lam_vel_up: np.ndarray, lam_vel_lo: np.ndarray, lam_sep: np.ndarray):
        self.instance = instance
        self.config = config
        self.penalty = penalty
        self.lam_vel_up = lam_vel_up
        self.lam_vel_lo = lam_vel_lo
        self.lam_sep = lam_sep  # (NEIGHBOR_SLOTS, T_sep)
        self._key = None
        self._memo = None

    def _evaluate(self, u: np.ndarray) -> tuple[float, np.ndarray]:
        cfg = self.config
        inst = self.instance
        mu = self.penalty
        positions, velocities = mpc.rollout_arrays(inst.state, u, cfg.dt)
        value, grad_p, grad_v = mpc._stage_terms(positions, velocities, inst, cfg)
        value += cfg.input_weight * float(np.sum(u**2))

        for obs in inst.obstacles:
            res = residuals_along(obs, positions)
            if np.any(res > 0.0):
                value += mu * float(np.sum(res**2))
                grad_p += (2.0 * mu) * res[:, None] * residual_gradients_along(obs, positions)

        c_up = velocities - cfg.velocity_box
        c_lo = -velocities - cfg.velocity_box
        a_up = np.maximum(0.0, self.lam_vel_up + mu * c_up)
        a_lo = np.maximum(0.0, self.lam_vel_lo + mu * c_lo)
        value += float(np.sum(a_up**2 - self.lam_vel_up**2) + np.sum(a_lo**2 - self.lam_vel_lo**2)) / (2.0 * mu)
        grad_v += a_up - a_lo

        early = slice(0, cfg.separation_horizon)
        diff = positions[None, early] - inst.neighbor_positions[:, early]  # (J, T_sep, 2)
        c_sep = cfg.separation_radius**2 - np.sum(diff**2, axis=2)         # (J, T_sep)
        a_sep = np.maximum(0.0, self.lam_sep + mu * c_sep)
        value += float(np.sum(a_sep**2 - self.lam_sep**2)) / (2.0 * mu)
        grad_p[early] += np.sum(-2.0 * a_sep[:, :, None] * diff, axis=0)

        grad = mpc._adjoint_input_gradient(grad_p, grad_v, u, cfg)
        return float(value), grad

    def _cached(self, u: np.ndarray) -> tuple[float, np.ndarray]:
        key = u.tobytes()
        if key != self._key:
            self._memo = self._evaluate(u)
            self._key = key
        return self._memo

    def value(self, u: np.ndarray) -> float:
        return self._cached(u)[0]

    def gradient(self, u: np.ndarray) -> np.ndarray:
        return self._cached(u)[1]

    def constraint_values(self, u: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        cfg = self.config
        positions, velocities = mpc.rollout_arrays(self.instance.state, u, cfg.dt)
        c_up = velocities - cfg.velocity_box
        c_lo = -velocities - cfg.velocity_box
        early = slice(0, cfg.separation_horizon)
        diff = positions[None, early] - self.instance.neighbor_positions[:, early]
        c_sep = cfg.separation_radius**2 - np.sum(diff**2, axis=2)
        return c_up, c_lo, c_sep


def solve(instance: MpcInstance, config: MpcConfig, warm_start, settings: SolverSettings) -> SolveOutcome:
    """Penalty/AL outer loop around inner_solve.

    Stops once the worst constraint residual is at or below the outer
    tolerance; otherwise multipliers are updated, the penalty grows, and the
    inner problem is re-solved from the previous iterate.  When the outer cap
    is exhausted with residuals above tolerance the best iterate is still
    returned, flagged infeasible_tolerance.
    """
    T = config.horizon
    u = project_box(np.asarray(warm_start, dtype=float).reshape(T, 2), config.input_box)
    penalty = settings.initial_penalty
    lam_vel_up = np.zeros((T, 2))
    lam_vel_lo = np.zeros((T, 2))
    lam_sep = np.zeros((mpc.NEIGHBOR_SLOTS, config.separation_horizon))

    history: list[float] = []
    inner_total = 0
    status = STATUS_INFEASIBLE
    outer = 0
    for outer in range(1, settings.max_outer_iterations + 1):
        objective = _AugmentedObjective(instance, config, penalty, lam_vel_up, lam_vel_lo, lam_sep)
        result = inner_solve(objective.value, objective.gradient, config.input_box, u, settings)
        u = result.point
        inner_total += result.iterations
        max_residual = mpc.constraint_residuals(u, instance, config).max()
        history.append(max_residual)
        if max_residual <= settings.outer_tolerance:
            status = STATUS_CONVERGED if result.converged else STATUS_MAX_ITERATIONS
            break
        c_up, c_lo, c_sep = objective.constraint_values(u)
        lam_vel_up = np.maximum(0.0, lam_vel_up + penalty * c_up)
        lam_vel_lo = np.maximum(0.0, lam_vel_lo + penalty * c_lo)
        lam_sep = np.maximum(0.0, lam_sep + penalty * c_sep)
        penalty *= settings.penalty_growth

    return SolveOutcome(
        inputs=u,
        status=status,
        cost=mpc.total_cost(u, instance, config),
        max_residual=history[-1],
        inner_iterations=inner_total,
        outer_iterations=outer,
        residual_history=tuple(history),
    )
