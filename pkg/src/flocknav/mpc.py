"""One agent's finite-horizon problem: dynamics, cost, residuals, parameter packing.

Index conventions (all arrays stage-major):
  * rollout entry k is the predicted state at time t+k+1, k = 0..T-1;
  * reference entry k is the target output for time t+k (one stage earlier,
    reflecting the single pre-solve data exchange);
  * neighbor entry k is the neighbor's predicted position for time t+k, so
    stage-k separation pairs rollout[k] with neighbor[k].
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .geometry import Obstacle, residuals_along
from .rules import ReferenceOutputs

DUMMY_COORDINATE = 1.0e4
NEIGHBOR_SLOTS = 5


@dataclass(frozen=True)
class AgentState:
    """Planar position and velocity; the MPC output y = (p, v)."""

    p: np.ndarray
    v: np.ndarray

    def __post_init__(self):
        p = np.asarray(self.p, dtype=float)
        v = np.asarray(self.v, dtype=float)
        if p.shape != (2,) or v.shape != (2,):
            raise ValueError("AgentState needs 2-vector position and velocity")
        if not (np.all(np.isfinite(p)) and np.all(np.isfinite(v))):
            raise ValueError("AgentState components must be finite")
        object.__setattr__(self, "p", p)
        object.__setattr__(self, "v", v)

    def vector(self) -> np.ndarray:
        return np.concatenate([self.p, self.v])


@dataclass(frozen=True)
class MpcConfig:
    horizon: int = 8
    separation_horizon: int = 4
    separation_radius: float = 0.25
    separation_weight: float = 100.0
    discount: float = 0.5
    input_weight: float = 1e-3
    input_box: float = 2.0
    velocity_box: float = 2.0
    dt: float = 0.025

    def __post_init__(self):
        if self.horizon < 1:
            raise ValueError("horizon must be at least 1")
        # The horizon-1 ablation needs separation_horizon == horizon; scenario
        # parsing enforces the strict inequality on user configs.
        if not 0 < self.separation_horizon <= self.horizon:
            raise ValueError("separation horizon must lie in (0, horizon]")
        if not 0.0 < self.discount <= 1.0:
            raise ValueError("discount must lie in (0, 1]")
        if self.separation_radius <= 0.0 or self.separation_weight < 0.0:
            raise ValueError("separation radius must be positive, weight nonnegative")
        if self.input_weight < 0.0:
            raise ValueError("input weight must be nonnegative")
        if self.input_box <= 0.0 or self.velocity_box <= 0.0:
            raise ValueError("box radii must be positive")
        if self.dt <= 0.0:
            raise ValueError("dt must be positive")


@dataclass(frozen=True)
class MpcInstance:
    """Packed parameters of one agent's one-step optimization.

    neighbor_positions always holds NEIGHBOR_SLOTS sequences; absent slots and
    uncovered stages are filled with DUMMY_COORDINATE so every separation term
    they touch is inactive.
    """

    state: np.ndarray            # (4,) initial (p, v)
    ref_positions: np.ndarray    # (T, 2)
    ref_velocities: np.ndarray   # (T, 2)
    neighbor_positions: np.ndarray  # (NEIGHBOR_SLOTS, T, 2)
    q: float
    obstacles: tuple[Obstacle, ...] = field(default_factory=tuple)


def dynamics_step(state: AgentState, control, dt: float) -> AgentState:
    """Exact zero-order-hold double integrator step."""
    u = np.asarray(control, dtype=float)
    return AgentState(
        p=state.p + dt * state.v + 0.5 * dt * dt * u,
        v=state.v + dt * u,
    )


def rollout(state: AgentState, inputs, dt: float) -> np.ndarray:
    """Iterate the dynamics; row k is the (p, v) state at time t+k+1."""
    positions, velocities = rollout_arrays(state.vector(), np.asarray(inputs, dtype=float), dt)
    return np.hstack([positions, velocities])


def rollout_arrays(state4: np.ndarray, inputs: np.ndarray, dt: float) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized rollout returning (positions (T,2), velocities (T,2))."""
    p0, v0 = state4[:2], state4[2:]
    velocities = v0 + dt * np.cumsum(inputs, axis=0)
    stacked = np.vstack([v0, velocities[:-1]])
    positions = p0 + dt * np.cumsum(stacked, axis=0) + 0.5 * dt * dt * np.cumsum(inputs, axis=0)
    return positions, velocities


def predicted_sq_distance(own_position, neighbor_position) -> float:
    """Squared distance between own stage-tau position and the neighbor's tau-1 one."""
    diff = np.asarray(own_position, dtype=float) - np.asarray(neighbor_position, dtype=float)
    return float(diff @ diff)


def _stage_terms(
    positions: np.ndarray,
    velocities: np.ndarray,
    instance: MpcInstance,
    config: MpcConfig,
) -> tuple[float, np.ndarray, np.ndarray]:
    """Tracking + soft-separation cost and its per-stage state gradients."""
    T = config.horizon
    gamma = config.discount ** np.arange(T)
    q = instance.q

    err_p = positions - instance.ref_positions
    err_v = velocities - instance.ref_velocities
    cost = float(gamma @ ((1.0 - q) * np.sum(err_p**2, axis=1) + q * np.sum(err_v**2, axis=1)))
    grad_p = (2.0 * (1.0 - q)) * gamma[:, None] * err_p
    grad_v = (2.0 * q) * gamma[:, None] * err_v

    rho = config.separation_weight
    if rho > 0.0 and config.separation_horizon < T:
        sep_sq = config.separation_radius**2
        late = slice(config.separation_horizon, T)
        diff = positions[None, late] - instance.neighbor_positions[:, late]  # (J, m, 2)
        hinge = np.maximum(0.0, sep_sq - np.sum(diff**2, axis=2))            # (J, m)
        gamma_late = config.discount ** (np.arange(config.separation_horizon, T) + 1.0)
        cost += float(rho * np.sum(gamma_late * np.sum(hinge**2, axis=0)))
        grad_p[late] += np.sum((-4.0 * rho) * (gamma_late[None, :, None] * hinge[:, :, None]) * diff, axis=0)
    return cost, grad_p, grad_v


def _adjoint_input_gradient(
    grad_p: np.ndarray, grad_v: np.ndarray, inputs: np.ndarray, config: MpcConfig
) -> np.ndarray:
    """Chain per-stage state gradients back through the linear rollout.

    Backward recursion mu_k = g_k + A^T mu_{k+1} with A^T (mp, mv) =
    (mp, dt*mp + mv); the input gradient picks up B^T mu_{k+1} per stage.
    """
    dt = config.dt
    grad = 2.0 * config.input_weight * inputs
    mu_p = np.zeros(2)
    mu_v = np.zeros(2)
    for k in range(config.horizon - 1, -1, -1):
        mu_v = mu_v + dt * mu_p + grad_v[k]
        mu_p = mu_p + grad_p[k]
        grad[k] += 0.5 * dt * dt * mu_p + dt * mu_v
    return grad


def total_cost(inputs, instance: MpcInstance, config: MpcConfig) -> float:
    """Input effort + discounted output tracking + late-stage separation hinges."""
    u = np.asarray(inputs, dtype=float).reshape(config.horizon, 2)
    positions, velocities = rollout_arrays(instance.state, u, config.dt)
    stage_cost, _, _ = _stage_terms(positions, velocities, instance, config)
    return float(config.input_weight * np.sum(u**2) + stage_cost)


def cost_and_gradient(inputs, instance: MpcInstance, config: MpcConfig) -> tuple[float, np.ndarray]:
    u = np.asarray(inputs, dtype=float).reshape(config.horizon, 2)
    positions, velocities = rollout_arrays(instance.state, u, config.dt)
    stage_cost, grad_p, grad_v = _stage_terms(positions, velocities, instance, config)
    cost = float(config.input_weight * np.sum(u**2) + stage_cost)
    return cost, _adjoint_input_gradient(grad_p, grad_v, u, config)


def cost_gradient(inputs, instance: MpcInstance, config: MpcConfig) -> np.ndarray:
    """Exact gradient of total_cost with respect to the input sequence."""
    return cost_and_gradient(inputs, instance, config)[1]


@dataclass(frozen=True)
class ConstraintResiduals:
    """Nonnegative violations; zero entries mean the constraint holds."""

    obstacle: np.ndarray    # (T,) max avoidance residual over obstacles per stage
    velocity: np.ndarray    # (T, 2) componentwise box excess
    separation: np.ndarray  # (T_sep, NEIGHBOR_SLOTS) early-stage hinge r_sep^2 - d

    def max(self) -> float:
        worst = 0.0
        for arr in (self.obstacle, self.velocity, self.separation):
            if arr.size:
                worst = max(worst, float(arr.max()))
        return worst


def constraint_residuals(inputs, instance: MpcInstance, config: MpcConfig) -> ConstraintResiduals:
    u = np.asarray(inputs, dtype=float).reshape(config.horizon, 2)
    positions, velocities = rollout_arrays(instance.state, u, config.dt)
    T = config.horizon
    obstacle = np.zeros(T)
    for obs in instance.obstacles:
        obstacle = np.maximum(obstacle, residuals_along(obs, positions))
    velocity = np.maximum(0.0, np.abs(velocities) - config.velocity_box)
    early = slice(0, config.separation_horizon)
    diff = positions[None, early] - instance.neighbor_positions[:, early]
    sq = np.sum(diff**2, axis=2)
    separation = np.maximum(0.0, config.separation_radius**2 - sq).T  # (T_sep, J)
    return ConstraintResiduals(obstacle=obstacle, velocity=velocity, separation=separation)


def pack_instance(
    state: AgentState,
    references: ReferenceOutputs,
    neighbor_predictions: Sequence[np.ndarray],
    q: float,
    obstacles: Sequence[Obstacle],
    config: MpcConfig,
) -> MpcInstance:
    """Fixed-size parameter pack; unfilled slots become inert dummy positions."""
    T = config.horizon
    if len(neighbor_predictions) > NEIGHBOR_SLOTS:
        raise ValueError(
            f"at most {NEIGHBOR_SLOTS} neighbors may be packed (apply closest_k first)"
        )
    if references.positions.shape != (T, 2) or references.velocities.shape != (T, 2):
        raise ValueError("reference sequences must match the horizon")
    if not np.isfinite(q):
        raise ValueError("trade-off weight must be finite")
    if not (np.all(np.isfinite(references.positions)) and np.all(np.isfinite(references.velocities))):
        raise ValueError("references must be finite")
    slots = np.full((NEIGHBOR_SLOTS, T, 2), DUMMY_COORDINATE)
    for j, seq in enumerate(neighbor_predictions):
        seq = np.asarray(seq, dtype=float)
        if seq.ndim != 2 or seq.shape[1] != 2 or len(seq) > T:
            raise ValueError("neighbor predictions must be (m, 2) with m <= horizon")
        if not np.all(np.isfinite(seq)):
            raise ValueError("neighbor predictions must be finite")
        slots[j, :len(seq)] = seq
    return MpcInstance(
        state=state.vector(),
        ref_positions=np.array(references.positions, dtype=float),
        ref_velocities=np.array(references.velocities, dtype=float),
        neighbor_positions=slots,
        q=float(q),
        obstacles=tuple(obstacles),
    )
