"""Lockstep simulation: detect, exchange, apply rules, solve, actuate.

Each step runs the full follower pipeline on step-consistent information
(packets dispatched at earlier steps), then all agents actuate their first
input simultaneously and broadcast fresh predictions.  Leaders track their
polyline path and ignore everyone.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Mapping, Sequence

import numpy as np

from . import comms, rules
from .comms import NeighborPacket
from .geometry import CompositeEnvironment, contains, distance_to
from .mpc import (
    NEIGHBOR_SLOTS,
    AgentState,
    MpcConfig,
    dynamics_step,
    pack_instance,
    rollout_arrays,
)
from .solver import SolverSettings, solve

ABLATIONS = ("none", "static-q", "cs-align", "flat-hierarchy", "horizon-1")

LEADER = "leader"
FOLLOWER = "follower"


@dataclass(frozen=True)
class AgentSpec:
    id: int
    role: str
    position: np.ndarray
    velocity: np.ndarray

    def __post_init__(self):
        if self.role not in (LEADER, FOLLOWER):
            raise ValueError(f"agent {self.id}: unknown role {self.role!r}")
        object.__setattr__(self, "position", np.asarray(self.position, dtype=float))
        object.__setattr__(self, "velocity", np.asarray(self.velocity, dtype=float))


@dataclass(frozen=True)
class LeaderPath:
    waypoints: np.ndarray  # (n, 2), consecutive points distinct
    speed: float

    def __post_init__(self):
        pts = np.asarray(self.waypoints, dtype=float)
        if pts.ndim != 2 or pts.shape[1] != 2 or len(pts) < 2:
            raise ValueError("leader path needs at least two 2-d waypoints")
        if np.any(np.linalg.norm(np.diff(pts, axis=0), axis=1) == 0.0):
            raise ValueError("leader path has zero-length segments")
        object.__setattr__(self, "waypoints", pts)
        if self.speed < 0.0:
            raise ValueError("leader speed must be nonnegative")


@dataclass(frozen=True)
class RuleParams:
    hierarchy_cap: int = 10
    behind_weight: float = 0.2
    tradeoff_static: float = 0.5
    tradeoff_gain: float = 2.0
    tradeoff_lo: float = 0.2
    tradeoff_hi: float = 0.8
    alignment_mode: str = "orientation"  # "orientation" | "cucker-smale"
    flat_hierarchy: bool = False
    flat_level: int = 1

    def __post_init__(self):
        if self.hierarchy_cap < 1:
            raise ValueError("hierarchy cap must be at least 1")
        if not 0.0 <= self.behind_weight <= 1.0:
            raise ValueError("behind weight must lie in [0, 1]")
        if not 0.0 < self.tradeoff_static < 1.0:
            raise ValueError("static trade-off must lie in (0, 1)")
        if self.tradeoff_gain < 0.0:
            raise ValueError("trade-off gain must be nonnegative")
        if not 0.0 <= self.tradeoff_lo <= self.tradeoff_hi <= 1.0:
            raise ValueError("trade-off saturation must satisfy 0 <= lo <= hi <= 1")
        if self.alignment_mode not in ("orientation", "cucker-smale"):
            raise ValueError(f"unknown alignment mode {self.alignment_mode!r}")


@dataclass(frozen=True)
class ScenarioConfig:
    agents: tuple[AgentSpec, ...]
    leader_path: LeaderPath
    environment: CompositeEnvironment = field(default_factory=CompositeEnvironment)
    detection_radius: float = 1.0
    sensing_radius: float | None = None
    delays: dict[tuple[int, int], int] = field(default_factory=dict)
    mpc: MpcConfig = field(default_factory=MpcConfig)
    rules: RuleParams = field(default_factory=RuleParams)
    solver: SolverSettings = field(default_factory=SolverSettings)
    steps: int = 0
    seed: int = 0
    arrival_radius: float | None = None
    ablation: str = "none"
    position_jitter: float = 0.0

    @property
    def effective_sensing_radius(self) -> float:
        return self.detection_radius if self.sensing_radius is None else self.sensing_radius

    @property
    def effective_arrival_radius(self) -> float:
        if self.arrival_radius is not None:
            return self.arrival_radius
        return 3.0 * self.mpc.separation_radius

    def leader_ids(self) -> tuple[int, ...]:
        return tuple(a.id for a in self.agents if a.role == LEADER)


@dataclass(frozen=True)
class StepRecord:
    step: int
    agent: int
    control: tuple[float, float]
    state: tuple[float, float, float, float]
    level: int
    q: float | None
    neighbors: tuple[int, ...]
    status: str | None
    cost: float | None
    max_residual: float | None
    inner_iterations: int
    outer_iterations: int


def apply_ablation(config: ScenarioConfig, flag: str) -> ScenarioConfig:
    """Switch off one rule at a time, matching the reported failure studies."""
    if flag not in ABLATIONS:
        raise ValueError(f"unknown ablation {flag!r}; expected one of {ABLATIONS}")
    config = replace(config, ablation=flag)
    if flag == "static-q":
        return replace(config, rules=replace(config.rules, tradeoff_gain=0.0))
    if flag == "cs-align":
        return replace(config, rules=replace(config.rules, alignment_mode="cucker-smale"))
    if flag == "flat-hierarchy":
        return replace(config, rules=replace(config.rules, flat_hierarchy=True))
    if flag == "horizon-1":
        return replace(config, mpc=replace(config.mpc, horizon=1, separation_horizon=1))
    return config


def _cumulative_lengths(waypoints: np.ndarray) -> np.ndarray:
    seg = np.linalg.norm(np.diff(waypoints, axis=0), axis=1)
    return np.concatenate([[0.0], np.cumsum(seg)])


def _path_state(waypoints: np.ndarray, cumulative: np.ndarray, arc: float) -> tuple[np.ndarray, np.ndarray]:
    """Point and unit tangent at a given arc length; past the end the tangent is zero."""
    total = cumulative[-1]
    if arc >= total:
        return waypoints[-1].copy(), np.zeros(2)
    arc = max(arc, 0.0)
    idx = int(np.searchsorted(cumulative, arc, side="right") - 1)
    idx = min(idx, len(waypoints) - 2)
    seg = waypoints[idx + 1] - waypoints[idx]
    seg_len = float(np.linalg.norm(seg))
    tangent = seg / seg_len
    return waypoints[idx] + (arc - cumulative[idx]) * tangent, tangent


def leader_outputs(path: LeaderPath, t: int, horizon: int, dt: float) -> tuple[np.ndarray, np.ndarray]:
    """Predicted leader outputs at stages t+1..t+horizon along the polyline.

    Positions advance by speed*dt of arc length per stage; velocities are the
    local unit tangent scaled by the speed, zero once the final waypoint is
    reached.
    """
    cumulative = _cumulative_lengths(path.waypoints)
    positions = np.zeros((horizon, 2))
    velocities = np.zeros((horizon, 2))
    for m in range(horizon):
        arc = path.speed * dt * (t + 1 + m)
        point, tangent = _path_state(path.waypoints, cumulative, arc)
        positions[m] = point
        velocities[m] = path.speed * tangent
    return positions, velocities


class World:
    """Mutable simulation state advanced one lockstep round at a time."""

    def __init__(self, config: ScenarioConfig):
        self.config = config
        self.ids = tuple(sorted(a.id for a in config.agents))
        self.specs = {a.id: a for a in config.agents}
        self.leaders = frozenset(config.leader_ids())
        self.t = 0
        self.records: list[StepRecord] = []
        self._cumulative = _cumulative_lengths(config.leader_path.waypoints)

        rng = np.random.default_rng(config.seed)
        self.states: dict[int, AgentState] = {}
        for i in self.ids:
            spec = self.specs[i]
            position = spec.position.copy()
            if config.position_jitter > 0.0 and i not in self.leaders:
                position = position + rng.normal(0.0, config.position_jitter, 2)
            self.states[i] = AgentState(p=position, v=spec.velocity.copy())

        self.levels: dict[int, int] = {
            i: 0 if i in self.leaders else config.rules.hierarchy_cap for i in self.ids
        }
        self.outbox: dict[int, dict[int, NeighborPacket]] = {i: {} for i in self.ids}
        self.warm_starts: dict[int, np.ndarray] = {
            i: np.zeros((config.mpc.horizon, 2)) for i in self.ids
        }
        for i in self.ids:
            self.outbox[i][-1] = self._bootstrap_packet(i)

    def _bootstrap_packet(self, agent_id: int) -> NeighborPacket:
        """Initial broadcast: a ballistic continuation of the initial state, stamped -1."""
        cfg = self.config
        state = self.states[agent_id]
        if agent_id in self.leaders:
            positions, velocities = leader_outputs(cfg.leader_path, -1, cfg.mpc.horizon, cfg.mpc.dt)
        else:
            steps = np.arange(cfg.mpc.horizon)[:, None]
            positions = state.p + cfg.mpc.dt * steps * state.v
            velocities = np.tile(state.v, (cfg.mpc.horizon, 1))
        return NeighborPacket(
            sender=agent_id, stamp=-1, level=self.levels[agent_id],
            positions=positions, velocities=velocities, origin_position=state.p.copy(),
        )

    def _packet_for(self, receiver: int, sender: int) -> NeighborPacket | None:
        delay = self.config.delays.get((sender, receiver), 0)
        stamp = self.t - 1 - delay
        if stamp < -1:
            return None
        return self.outbox[sender].get(stamp)

    def _sensed_obstacles(self, position: np.ndarray):
        radius = self.config.effective_sensing_radius
        return tuple(
            obs for obs in self.config.environment.obstacles
            if distance_to(obs, position) <= radius
        )

    def _plan_leader(self, agent_id: int, neighbors: tuple[int, ...]):
        cfg = self.config
        path = cfg.leader_path
        arc = path.speed * cfg.mpc.dt * (self.t + 1)
        point, tangent = _path_state(path.waypoints, self._cumulative, arc)
        new_state = AgentState(p=point, v=path.speed * tangent)
        positions, velocities = leader_outputs(path, self.t, cfg.mpc.horizon, cfg.mpc.dt)
        packet = NeighborPacket(
            sender=agent_id, stamp=self.t, level=0,
            positions=positions, velocities=velocities,
            origin_position=self.states[agent_id].p.copy(),
        )
        record = StepRecord(
            step=self.t, agent=agent_id, control=(0.0, 0.0),
            state=tuple(float(x) for x in new_state.vector()),
            level=0, q=None, neighbors=neighbors, status=None, cost=None,
            max_residual=None, inner_iterations=0, outer_iterations=0,
        )
        return new_state, packet, self.warm_starts[agent_id], 0, record

    def _plan_follower(self, agent_id: int, neighbors: tuple[int, ...],
                       positions_now: Mapping[int, np.ndarray]):
        cfg = self.config
        mpc_cfg = cfg.mpc
        params = cfg.rules
        state = self.states[agent_id]
        horizon = mpc_cfg.horizon

        packets = {}
        for j in neighbors:
            packet = self._packet_for(agent_id, j)
            if packet is not None:
                packets[j] = packet

        if params.flat_hierarchy:
            level = params.flat_level
        else:
            level = rules.update_hierarchy(
                False, [packets[j].level for j in sorted(packets)], params.hierarchy_cap
            )

        own_packet = self.outbox[agent_id][self.t - 1]
        own_aligned = comms.align_horizon(own_packet, horizon, self.t)
        aligned = {
            j: comms.align_horizon(pkt, horizon, self.t) for j, pkt in sorted(packets.items())
        }
        covering = {j: a for j, a in aligned.items() if a.last_stage >= 0}

        neighborhoods = comms.virtual_neighborhoods(covering.values(), agent_id, horizon)
        position_map = {agent_id: own_aligned.positions}
        velocity_map = {agent_id: own_aligned.velocities}
        level_map = {agent_id: level}
        ahead_map = {agent_id: True}
        alignment_raw = {agent_id: 1.0} if params.alignment_mode == "cucker-smale" else None
        for j, a in covering.items():
            position_map[j] = a.positions
            velocity_map[j] = a.velocities
            level_map[j] = a.level
            ahead_map[j] = rules.classify_ahead(state.v, state.p, a.origin_position)
            if alignment_raw is not None:
                gap = a.origin_position - state.p
                alignment_raw[j] = 1.0 / (1.0 + float(gap @ gap))

        refs = rules.reference_outputs(
            neighborhoods.stages, position_map, velocity_map, level_map,
            own_id=agent_id, ahead=ahead_map, behind_weight=params.behind_weight,
            alignment_raw=alignment_raw,
        )
        tradeoff = rules.tradeoff_weight(
            state.p, refs.positions[0], params.tradeoff_static, params.tradeoff_gain,
            (params.tradeoff_lo, params.tradeoff_hi),
        )

        chosen = comms.closest_k(
            state.p, {j: positions_now[j] for j in covering}, NEIGHBOR_SLOTS
        )
        instance = pack_instance(
            state, refs, [covering[j].positions for j in chosen], tradeoff.q,
            self._sensed_obstacles(state.p), mpc_cfg,
        )
        outcome = solve(instance, mpc_cfg, self.warm_starts[agent_id], cfg.solver)

        control = outcome.inputs[0]
        new_state = dynamics_step(state, control, mpc_cfg.dt)
        pred_p, pred_v = rollout_arrays(state.vector(), outcome.inputs, mpc_cfg.dt)
        packet = NeighborPacket(
            sender=agent_id, stamp=self.t, level=level,
            positions=pred_p, velocities=pred_v, origin_position=state.p.copy(),
        )
        warm = np.vstack([outcome.inputs[1:], outcome.inputs[-1:]])
        record = StepRecord(
            step=self.t, agent=agent_id,
            control=(float(control[0]), float(control[1])),
            state=tuple(float(x) for x in new_state.vector()),
            level=level, q=tradeoff.q, neighbors=neighbors,
            status=outcome.status, cost=outcome.cost,
            max_residual=outcome.max_residual,
            inner_iterations=outcome.inner_iterations,
            outer_iterations=outcome.outer_iterations,
        )
        return new_state, packet, warm, level, record

    def step_once(self) -> list[StepRecord]:
        positions_now = {i: self.states[i].p for i in self.ids}
        adjacency = comms.detect_neighbors(positions_now, self.config.detection_radius)
        planned = {}
        for i in self.ids:
            neighbors = tuple(j for j in adjacency[i] if j != i)
            if i in self.leaders:
                planned[i] = self._plan_leader(i, neighbors)
            else:
                planned[i] = self._plan_follower(i, neighbors, positions_now)
        # Barrier: every plan above used pre-step information only.
        step_records = []
        for i in self.ids:
            new_state, packet, warm, level, record = planned[i]
            self.states[i] = new_state
            self.outbox[i][self.t] = packet
            self.warm_starts[i] = warm
            self.levels[i] = level
            step_records.append(record)
        self.records.extend(step_records)
        self.t += 1
        return step_records


def step(world: World) -> World:
    """Advance one lockstep round; mutates and returns the world."""
    world.step_once()
    return world


def run(config: ScenarioConfig) -> tuple[list[StepRecord], dict]:
    """Execute the configured number of steps and summarize the trace."""
    world = World(config)
    for _ in range(config.steps):
        world.step_once()
    return world.records, metrics(world.records, config)


def _graph_distances(positions: Mapping[int, np.ndarray], radius: float,
                     leaders: Sequence[int], cap: int) -> dict[int, int]:
    adjacency = comms.detect_neighbors(positions, radius)
    distances = {i: cap for i in positions}
    frontier = sorted(set(leaders))
    for i in frontier:
        distances[i] = 0
    depth = 0
    visited = set(frontier)
    while frontier and depth < cap:
        depth += 1
        nxt = []
        for i in frontier:
            for j in adjacency[i]:
                if j not in visited:
                    visited.add(j)
                    distances[j] = depth
                    nxt.append(j)
        frontier = sorted(nxt)
    return distances


def _step_summary(step_index: int, states: Mapping[int, np.ndarray], config: ScenarioConfig,
                  all_converged: bool) -> dict:
    ids = sorted(states)
    leaders = [i for i in ids if i in set(config.leader_ids())]
    followers = [i for i in ids if i not in leaders]
    positions = {i: states[i][:2] for i in ids}

    max_leader_distance = 0.0
    for i in followers:
        nearest = min(float(np.linalg.norm(positions[i] - positions[l])) for l in leaders)
        max_leader_distance = max(max_leader_distance, nearest)

    min_pairwise = float("inf")
    for a_idx, i in enumerate(ids):
        for j in ids[a_idx + 1:]:
            min_pairwise = min(min_pairwise, float(np.linalg.norm(positions[i] - positions[j])))
    if min_pairwise == float("inf"):
        min_pairwise = None

    inside = 0
    for i in ids:
        if any(contains(obs, positions[i], use_margin=False) for obs in config.environment.obstacles):
            inside += 1

    distances = _graph_distances(positions, config.detection_radius, leaders,
                                 config.rules.hierarchy_cap)
    adjacency = comms.detect_neighbors(positions, config.detection_radius)
    reached = {ids[0]}
    frontier = [ids[0]]
    while frontier:
        nxt = []
        for i in frontier:
            for j in adjacency[i]:
                if j not in reached:
                    reached.add(j)
                    nxt.append(j)
        frontier = nxt
    connected = len(reached) == len(ids)
    return {
        "step": step_index,
        "max_leader_distance": max_leader_distance,
        "connected": connected,
        "graph_distances": distances,
        "min_pairwise_distance": min_pairwise,
        "inside_obstacle_count": inside,
        "all_converged": all_converged,
    }


def metrics(records: Sequence[StepRecord], config: ScenarioConfig) -> dict:
    """Per-step and final navigation metrics from a trace.

    An empty trace is summarized from the configured initial states.
    """
    leaders = set(config.leader_ids())
    if not records:
        states = {a.id: np.concatenate([a.position, a.velocity]) for a in config.agents}
        summary = _step_summary(-1, states, config, all_converged=True)
        final = dict(summary)
        final["arrived"] = _arrived(states, config)
        return {"steps": 0, "arrived": final["arrived"], "per_step": [], "final": final}

    per_step = []
    by_step: dict[int, list[StepRecord]] = {}
    for record in records:
        by_step.setdefault(record.step, []).append(record)
    for step_index in sorted(by_step):
        group = by_step[step_index]
        states = {r.agent: np.asarray(r.state) for r in group}
        all_converged = all(
            r.status == "converged" for r in group if r.agent not in leaders
        )
        per_step.append(_step_summary(step_index, states, config, all_converged))

    final_states = {r.agent: np.asarray(r.state) for r in by_step[max(by_step)]}
    final = dict(per_step[-1])
    final["arrived"] = _arrived(final_states, config)
    return {
        "steps": len(by_step),
        "arrived": final["arrived"],
        "per_step": per_step,
        "final": final,
    }


def _arrived(states: Mapping[int, np.ndarray], config: ScenarioConfig) -> bool:
    """Every follower within the arrival radius of its nearest leader."""
    leaders = set(config.leader_ids())
    radius = config.effective_arrival_radius
    for i, state in states.items():
        if i in leaders:
            continue
        nearest = min(
            float(np.linalg.norm(state[:2] - states[l][:2])) for l in sorted(leaders)
        )
        if nearest > radius:
            return False
    return True
