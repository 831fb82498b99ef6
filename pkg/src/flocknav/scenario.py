"""Scenario file parsing, validation, and config digests.

A scenario is one YAML document with sections {agents, leader_path,
environment, comms, mpc, rules, solver, run}; everything except agents,
leader_path and comms.detection_radius may be omitted and falls back to the
default parameter set (horizon 8, separation horizon 4, separation weight 100,
behind weight 0.2, static trade-off 0.5 with gain 2 saturated in [0.2, 0.8],
hierarchy cap 10, discount 0.5, dt 1/40 s, box radii 2).
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import replace
from pathlib import Path

import numpy as np
import yaml

from .geometry import CircleObstacle, CompositeEnvironment, RectangleObstacle, contains
from .mpc import MpcConfig
from .sim import (
    ABLATIONS,
    AgentSpec,
    LeaderPath,
    RuleParams,
    ScenarioConfig,
    apply_ablation,
)
from .solver import SolverSettings


class ValidationError(ValueError):
    """A scenario violated the schema or an invariant; message names the key."""


def _require(condition: bool, message: str) -> None:
    if not condition:
        raise ValidationError(message)


def _check_keys(section: dict, allowed: set[str], where: str) -> None:
    unknown = set(section) - allowed
    _require(not unknown, f"{where}: unknown keys {sorted(unknown)}")


def _vector(value, where: str) -> np.ndarray:
    try:
        vec = np.asarray(value, dtype=float)
    except (TypeError, ValueError):
        raise ValidationError(f"{where}: expected a 2-vector") from None
    _require(vec.shape == (2,), f"{where}: expected a 2-vector")
    _require(bool(np.all(np.isfinite(vec))), f"{where}: entries must be finite")
    return vec


def _parse_agents(data, where="agents") -> tuple[AgentSpec, ...]:
    _require(isinstance(data, list) and data, f"{where}: need a nonempty list")
    agents = []
    seen = set()
    for idx, entry in enumerate(data):
        here = f"{where}[{idx}]"
        _require(isinstance(entry, dict), f"{here}: expected a mapping")
        _check_keys(entry, {"id", "role", "position", "velocity"}, here)
        _require("id" in entry and "role" in entry and "position" in entry,
                 f"{here}: id, role and position are required")
        agent_id = entry["id"]
        _require(isinstance(agent_id, int) and agent_id >= 0, f"{here}.id: nonnegative integer")
        _require(agent_id not in seen, f"{here}.id: duplicate agent id {agent_id}")
        seen.add(agent_id)
        role = entry["role"]
        _require(role in ("leader", "follower"), f"{here}.role: must be leader or follower")
        position = _vector(entry["position"], f"{here}.position")
        velocity = _vector(entry.get("velocity", [0.0, 0.0]), f"{here}.velocity")
        agents.append(AgentSpec(id=agent_id, role=role, position=position, velocity=velocity))
    return tuple(agents)


def _parse_environment(data, where="environment") -> CompositeEnvironment:
    if data is None:
        return CompositeEnvironment()
    _require(isinstance(data, dict), f"{where}: expected a mapping")
    _check_keys(data, {"margin", "obstacles", "bounds"}, where)
    default_margin = float(data.get("margin", 0.1))
    _require(default_margin >= 0.0, f"{where}.margin: must be nonnegative")
    obstacles = []
    for idx, entry in enumerate(data.get("obstacles", []) or []):
        here = f"{where}.obstacles[{idx}]"
        _require(isinstance(entry, dict), f"{here}: expected a mapping")
        kind = entry.get("type")
        margin = float(entry.get("margin", default_margin))
        _require(margin >= 0.0, f"{here}.margin: must be nonnegative")
        try:
            if kind == "circle":
                _check_keys(entry, {"type", "center", "radius", "margin"}, here)
                obstacles.append(CircleObstacle(
                    center=_vector(entry.get("center"), f"{here}.center"),
                    radius=float(entry.get("radius", 0.0)), margin=margin))
            elif kind == "rectangle":
                _check_keys(entry, {"type", "min_corner", "max_corner", "margin"}, here)
                obstacles.append(RectangleObstacle(
                    min_corner=_vector(entry.get("min_corner"), f"{here}.min_corner"),
                    max_corner=_vector(entry.get("max_corner"), f"{here}.max_corner"),
                    margin=margin))
            else:
                raise ValidationError(f"{here}.type: must be circle or rectangle")
        except ValueError as exc:
            raise ValidationError(f"{here}: {exc}") from None
    bounds = None
    if data.get("bounds") is not None:
        entry = data["bounds"]
        _check_keys(entry, {"min_corner", "max_corner"}, f"{where}.bounds")
        bounds = (_vector(entry.get("min_corner"), f"{where}.bounds.min_corner"),
                  _vector(entry.get("max_corner"), f"{where}.bounds.max_corner"))
        _require(bool(np.all(bounds[1] > bounds[0])),
                 f"{where}.bounds: max corner must dominate min corner")
    return CompositeEnvironment(obstacles=tuple(obstacles), bounds=bounds)


def _parse_section(data, cls, where: str):
    if data is None:
        return cls()
    _require(isinstance(data, dict), f"{where}: expected a mapping")
    fields = set(cls.__dataclass_fields__)
    kwargs = {}
    for key, value in data.items():
        _require(key in fields, f"{where}.{key}: unknown key")
        kwargs[key] = value
    try:
        return cls(**kwargs)
    except (TypeError, ValueError) as exc:
        raise ValidationError(f"{where}: {exc}") from None


def _parse_delays(data, agent_ids: set[int], where="comms.delays") -> dict[tuple[int, int], int]:
    delays: dict[tuple[int, int], int] = {}
    for idx, entry in enumerate(data or []):
        here = f"{where}[{idx}]"
        _require(isinstance(entry, dict), f"{here}: expected a mapping")
        _check_keys(entry, {"from", "to", "delay"}, here)
        src, dst, delay = entry.get("from"), entry.get("to"), entry.get("delay")
        _require(isinstance(src, int) and src in agent_ids, f"{here}.from: unknown agent")
        _require(isinstance(dst, int) and dst in agent_ids, f"{here}.to: unknown agent")
        _require(isinstance(delay, int) and delay >= 0, f"{here}.delay: nonnegative integer")
        delays[(src, dst)] = delay
    return delays


def config_from_dict(data: dict, ablation_override: str | None = None) -> ScenarioConfig:
    """Build and validate a ScenarioConfig from a parsed YAML document."""
    _require(isinstance(data, dict), "scenario: expected a mapping at top level")
    _check_keys(data, {"agents", "leader_path", "environment", "comms", "mpc",
                       "rules", "solver", "run"}, "scenario")

    agents = _parse_agents(data.get("agents"))
    agent_ids = {a.id for a in agents}
    _require(any(a.role == "leader" for a in agents), "agents: at least one leader is required")

    path_data = data.get("leader_path")
    _require(isinstance(path_data, dict), "leader_path: section is required")
    _check_keys(path_data, {"waypoints", "speed"}, "leader_path")
    try:
        leader_path = LeaderPath(
            waypoints=np.asarray(path_data.get("waypoints"), dtype=float),
            speed=float(path_data.get("speed", 0.0)),
        )
    except (TypeError, ValueError) as exc:
        raise ValidationError(f"leader_path: {exc}") from None

    environment = _parse_environment(data.get("environment"))

    comms_data = data.get("comms")
    _require(isinstance(comms_data, dict), "comms: section is required")
    _check_keys(comms_data, {"detection_radius", "sensing_radius", "delays"}, "comms")
    _require("detection_radius" in comms_data, "comms.detection_radius: required")
    detection_radius = float(comms_data["detection_radius"])
    _require(detection_radius > 0.0, "comms.detection_radius: must be positive")
    sensing_radius = comms_data.get("sensing_radius")
    if sensing_radius is not None:
        sensing_radius = float(sensing_radius)
        _require(sensing_radius > 0.0, "comms.sensing_radius: must be positive")
    delays = _parse_delays(comms_data.get("delays"), agent_ids)

    mpc_cfg = _parse_section(data.get("mpc"), MpcConfig, "mpc")
    _require(mpc_cfg.separation_horizon < mpc_cfg.horizon,
             "mpc.separation_horizon: must be strictly below mpc.horizon")
    rules_data = data.get("rules")
    saturation = None
    if isinstance(rules_data, dict) and "tradeoff_saturation" in rules_data:
        rules_data = dict(rules_data)
        saturation = rules_data.pop("tradeoff_saturation")
    rule_params = _parse_section(rules_data, RuleParams, "rules")
    if saturation is not None:
        _require(isinstance(saturation, (list, tuple)) and len(saturation) == 2,
                 "rules.tradeoff_saturation: expected [lo, hi]")
        try:
            rule_params = replace(rule_params, tradeoff_lo=float(saturation[0]),
                                  tradeoff_hi=float(saturation[1]))
        except ValueError as exc:
            raise ValidationError(f"rules.tradeoff_saturation: {exc}") from None
    solver_settings = _parse_section(data.get("solver"), SolverSettings, "solver")

    run_data = data.get("run") or {}
    _require(isinstance(run_data, dict), "run: expected a mapping")
    _check_keys(run_data, {"steps", "seed", "arrival_radius", "ablation", "position_jitter"}, "run")
    steps = run_data.get("steps", 0)
    _require(isinstance(steps, int) and steps >= 0, "run.steps: nonnegative integer")
    seed = run_data.get("seed", 0)
    _require(isinstance(seed, int), "run.seed: integer")
    arrival_radius = run_data.get("arrival_radius")
    if arrival_radius is not None:
        arrival_radius = float(arrival_radius)
        _require(arrival_radius > 0.0, "run.arrival_radius: must be positive")
    ablation = ablation_override if ablation_override is not None else run_data.get("ablation", "none")
    _require(ablation in ABLATIONS, f"run.ablation: unknown ablation {ablation!r}")
    position_jitter = float(run_data.get("position_jitter", 0.0))
    _require(position_jitter >= 0.0, "run.position_jitter: must be nonnegative")

    config = ScenarioConfig(
        agents=agents, leader_path=leader_path, environment=environment,
        detection_radius=detection_radius, sensing_radius=sensing_radius,
        delays=delays, mpc=mpc_cfg, rules=rule_params, solver=solver_settings,
        steps=steps, seed=seed, arrival_radius=arrival_radius,
        position_jitter=position_jitter,
    )
    _validate_invariants(config)
    return apply_ablation(config, ablation)


def _validate_invariants(config: ScenarioConfig) -> None:
    positions = {a.id: a.position for a in config.agents}
    ids = sorted(positions)
    for a_idx, i in enumerate(ids):
        for j in ids[a_idx + 1:]:
            gap = float(np.linalg.norm(positions[i] - positions[j]))
            _require(gap >= config.mpc.separation_radius,
                     f"agents: initial positions of {i} and {j} are {gap:.3f} apart, "
                     f"below the separation radius")
    for i in ids:
        for obs_idx, obs in enumerate(config.environment.obstacles):
            _require(not contains(obs, positions[i], use_margin=True),
                     f"agents: agent {i} starts inside enlarged obstacle {obs_idx}")
    if config.environment.bounds is not None:
        lo, hi = config.environment.bounds
        for i in ids:
            _require(bool(np.all(positions[i] >= lo) and np.all(positions[i] <= hi)),
                     f"agents: agent {i} starts outside the arena bounds")
    _require(config.leader_path.speed <= config.mpc.velocity_box,
             "leader_path.speed: must not exceed the follower velocity box")
    for a in config.agents:
        _require(bool(np.all(np.abs(a.velocity) <= config.mpc.velocity_box)),
                 f"agents: agent {a.id} initial velocity violates the velocity box")


def parse_scenario(path, ablation_override: str | None = None) -> ScenarioConfig:
    """Load, validate, and resolve a scenario file."""
    text = Path(path).read_text(encoding="utf-8")
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ValidationError(f"{path}: invalid YAML ({exc})") from None
    return config_from_dict(data, ablation_override=ablation_override)


def config_to_dict(config: ScenarioConfig) -> dict:
    """Canonical plain-data form of a config (digest and provenance)."""
    def obstacle_dict(obs):
        if isinstance(obs, CircleObstacle):
            return {"type": "circle", "center": obs.center.tolist(),
                    "radius": obs.radius, "margin": obs.margin}
        return {"type": "rectangle", "min_corner": obs.min_corner.tolist(),
                "max_corner": obs.max_corner.tolist(), "margin": obs.margin}

    return {
        "agents": [
            {"id": a.id, "role": a.role, "position": a.position.tolist(),
             "velocity": a.velocity.tolist()} for a in config.agents
        ],
        "leader_path": {"waypoints": config.leader_path.waypoints.tolist(),
                        "speed": config.leader_path.speed},
        "environment": {
            "obstacles": [obstacle_dict(o) for o in config.environment.obstacles],
            "bounds": None if config.environment.bounds is None else
            [config.environment.bounds[0].tolist(), config.environment.bounds[1].tolist()],
        },
        "comms": {
            "detection_radius": config.detection_radius,
            "sensing_radius": config.sensing_radius,
            "delays": sorted([src, dst, d] for (src, dst), d in config.delays.items()),
        },
        "mpc": {k: getattr(config.mpc, k) for k in MpcConfig.__dataclass_fields__},
        "rules": {k: getattr(config.rules, k) for k in RuleParams.__dataclass_fields__},
        "solver": {k: getattr(config.solver, k) for k in SolverSettings.__dataclass_fields__},
        "run": {"steps": config.steps, "seed": config.seed,
                "arrival_radius": config.arrival_radius,
                "ablation": config.ablation,
                "position_jitter": config.position_jitter},
    }


def config_digest(config: ScenarioConfig) -> str:
    payload = json.dumps(config_to_dict(config), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(payload.encode("utf-8")).hexdigest()
