from __future__ import annotations

import numpy as np
import pytest

from oracles import bfs_levels, walk_polyline

from flocknav.sim import (
    AgentSpec,
    LeaderPath,
    RuleParams,
    ScenarioConfig,
    StepRecord,
    World,
    apply_ablation,
    leader_outputs,
    metrics,
    run,
    step,
)
from flocknav.mpc import MpcConfig


def make_config(agents, *, waypoints=((0.0, 0.0), (3.0, 0.0)), speed=0.5,
                detection_radius=0.8, steps=0, **kwargs):
    return ScenarioConfig(
        agents=tuple(agents),
        leader_path=LeaderPath(waypoints=np.asarray(waypoints, dtype=float), speed=speed),
        detection_radius=detection_radius,
        steps=steps,
        **kwargs,
    )


class TestLeaderOutputs:
    def test_straight_uniform_motion(self):
        path = LeaderPath(waypoints=np.array([[0.0, 0.0], [10.0, 0.0]]), speed=1.0)
        positions, velocities = leader_outputs(path, t=0, horizon=3, dt=1.0)
        np.testing.assert_allclose(positions, [[1.0, 0.0], [2.0, 0.0], [3.0, 0.0]])
        np.testing.assert_allclose(velocities, [[1.0, 0.0]] * 3)

    def test_terminal_rest(self):
        path = LeaderPath(waypoints=np.array([[0.0, 0.0], [1.0, 0.0]]), speed=1.0)
        positions, velocities = leader_outputs(path, t=10, horizon=4, dt=1.0)
        np.testing.assert_allclose(positions, [[1.0, 0.0]] * 4)
        np.testing.assert_array_equal(velocities, np.zeros((4, 2)))

    def test_corner_switches_tangent(self):
        waypoints = np.array([[0.0, 0.0], [2.0, 0.0], [2.0, 2.0]])
        path = LeaderPath(waypoints=waypoints, speed=1.0)
        positions, velocities = leader_outputs(path, t=0, horizon=4, dt=1.0)
        np.testing.assert_allclose(velocities[0], [1.0, 0.0])
        np.testing.assert_allclose(velocities[1], [0.0, 1.0])  # exactly at the corner
        for m in range(4):
            arc = 1.0 * (0 + 1 + m)
            point, tangent = walk_polyline(waypoints, arc)
            np.testing.assert_allclose(positions[m], point)
            np.testing.assert_allclose(velocities[m], tangent)

    def test_matches_arc_walk_oracle_random(self):
        rng = np.random.default_rng(19)
        for _ in range(20):
            n = int(rng.integers(2, 6))
            waypoints = np.cumsum(rng.uniform(-1, 1, (n, 2)), axis=0)
            lengths = np.linalg.norm(np.diff(waypoints, axis=0), axis=1)
            if np.any(lengths < 1e-6):
                continue
            speed = float(rng.uniform(0.1, 1.5))
            dt = float(rng.uniform(0.05, 0.5))
            path = LeaderPath(waypoints=waypoints, speed=speed)
            t = int(rng.integers(0, 8))
            positions, velocities = leader_outputs(path, t=t, horizon=5, dt=dt)
            for m in range(5):
                point, tangent = walk_polyline(waypoints, speed * dt * (t + 1 + m))
                np.testing.assert_allclose(positions[m], point, atol=1e-12)
                np.testing.assert_allclose(velocities[m], speed * tangent, atol=1e-12)


class TestStep:
    def test_isolated_follower_at_rest_is_fixed_point(self):
        config = make_config([
            AgentSpec(id=0, role="leader", position=[100.0, 0.0], velocity=[0.0, 0.0]),
            AgentSpec(id=1, role="follower", position=[0.0, 0.0], velocity=[0.0, 0.0]),
        ], waypoints=((100.0, 0.0), (103.0, 0.0)))
        world = World(config)
        for _ in range(3):
            step(world)
        for record in world.records:
            if record.agent == 1:
                assert record.state == (0.0, 0.0, 0.0, 0.0)
                assert record.control == (0.0, 0.0)
                assert record.level == config.rules.hierarchy_cap

    def test_follower_adjacent_to_leader_gets_level_one(self):
        config = make_config([
            AgentSpec(id=0, role="leader", position=[0.0, 0.0], velocity=[0.0, 0.0]),
            AgentSpec(id=1, role="follower", position=[0.5, 0.0], velocity=[0.0, 0.0]),
        ])
        world = World(config)
        records = world.step_once()
        follower = next(r for r in records if r.agent == 1)
        assert follower.level == 1

    def test_leaderless_cluster_holds_cap(self):
        cap = 10
        config = make_config([
            AgentSpec(id=0, role="leader", position=[50.0, 0.0], velocity=[0.0, 0.0]),
            AgentSpec(id=1, role="follower", position=[0.0, 0.0], velocity=[0.0, 0.0]),
            AgentSpec(id=2, role="follower", position=[0.5, 0.0], velocity=[0.0, 0.0]),
        ], waypoints=((50.0, 0.0), (53.0, 0.0)))
        world = World(config)
        for _ in range(cap + 1):
            step(world)
        for record in world.records:
            if record.agent in (1, 2):
                assert record.level == cap

    def test_online_levels_match_bfs_oracle(self):
        # chain: leader - f1 - f2 - f3 with only adjacent links
        params = RuleParams(hierarchy_cap=3)
        config = make_config([
            AgentSpec(id=0, role="leader", position=[0.0, 0.0], velocity=[0.0, 0.0]),
            AgentSpec(id=1, role="follower", position=[0.5, 0.0], velocity=[0.0, 0.0]),
            AgentSpec(id=2, role="follower", position=[1.0, 0.0], velocity=[0.0, 0.0]),
            AgentSpec(id=3, role="follower", position=[1.5, 0.0], velocity=[0.0, 0.0]),
        ], detection_radius=0.6, speed=0.0, rules=params)
        world = World(config)
        rounds = (0 + 1) * params.hierarchy_cap
        for _ in range(rounds + 1):
            step(world)
        last = {r.agent: r for r in world.records if r.step == rounds}
        positions = {i: np.asarray(last[i].state[:2]) for i in last}
        adjacency = {}
        for i in positions:
            adjacency[i] = {
                j for j in positions
                if j != i and np.linalg.norm(positions[i] - positions[j]) <= 0.6
            }
        expected = bfs_levels(adjacency, {0}, params.hierarchy_cap)
        for i, record in last.items():
            assert record.level == expected[i], f"agent {i}"

    def test_online_levels_match_bfs_oracle_with_delay(self):
        params = RuleParams(hierarchy_cap=3)
        delay = 1
        config = make_config([
            AgentSpec(id=0, role="leader", position=[0.0, 0.0], velocity=[0.0, 0.0]),
            AgentSpec(id=1, role="follower", position=[0.5, 0.0], velocity=[0.0, 0.0]),
            AgentSpec(id=2, role="follower", position=[1.0, 0.0], velocity=[0.0, 0.0]),
        ], detection_radius=0.6, speed=0.0, rules=params,
            delays={(0, 1): delay, (1, 2): delay})
        world = World(config)
        rounds = (delay + 1) * params.hierarchy_cap
        for _ in range(rounds + 1):
            step(world)
        last = {r.agent: r for r in world.records if r.step == rounds}
        assert last[1].level == 1
        assert last[2].level == 2

    def test_delayed_packets_arrive_late(self):
        config = make_config([
            AgentSpec(id=0, role="leader", position=[0.0, 0.0], velocity=[0.0, 0.0]),
            AgentSpec(id=1, role="follower", position=[0.5, 0.0], velocity=[0.0, 0.0]),
        ], speed=0.0, delays={(0, 1): 2})
        world = World(config)
        for _ in range(4):
            step(world)
        levels = [r.level for r in world.records if r.agent == 1]
        assert levels == [10, 10, 1, 1]


class TestRun:
    def test_zero_steps_metrics_on_initial_state(self):
        config = make_config([
            AgentSpec(id=0, role="leader", position=[0.0, 0.0], velocity=[0.0, 0.0]),
            AgentSpec(id=1, role="follower", position=[0.5, 0.0], velocity=[0.0, 0.0]),
        ], steps=0)
        records, summary = run(config)
        assert records == []
        assert summary["steps"] == 0
        assert summary["per_step"] == []
        assert summary["final"]["max_leader_distance"] == pytest.approx(0.5)
        assert summary["arrived"]  # within default arrival radius 3 * 0.25

    def test_deterministic_records(self):
        config = make_config([
            AgentSpec(id=0, role="leader", position=[0.0, 0.0], velocity=[0.0, 0.0]),
            AgentSpec(id=1, role="follower", position=[-0.5, 0.1], velocity=[0.0, 0.0]),
            AgentSpec(id=2, role="follower", position=[-1.0, -0.1], velocity=[0.0, 0.0]),
        ], steps=25)
        records_a, metrics_a = run(config)
        records_b, metrics_b = run(config)
        assert records_a == records_b
        assert metrics_a == metrics_b

    def test_records_ordered_and_complete(self):
        config = make_config([
            AgentSpec(id=0, role="leader", position=[0.0, 0.0], velocity=[0.0, 0.0]),
            AgentSpec(id=1, role="follower", position=[0.4, 0.0], velocity=[0.0, 0.0]),
        ], steps=5)
        records, _ = run(config)
        assert [(r.step, r.agent) for r in records] == [(t, i) for t in range(5) for i in (0, 1)]


def _record(step_index, agent, state, status="converged", level=1, neighbors=()):
    return StepRecord(
        step=step_index, agent=agent, control=(0.0, 0.0), state=state, level=level,
        q=0.5 if status else None, neighbors=tuple(neighbors), status=status,
        cost=0.0, max_residual=0.0, inner_iterations=1, outer_iterations=1,
    )


class TestMetrics:
    def _config(self, **kwargs):
        return make_config([
            AgentSpec(id=0, role="leader", position=[0.0, 0.0], velocity=[0.0, 0.0]),
            AgentSpec(id=1, role="follower", position=[0.5, 0.0], velocity=[0.0, 0.0]),
            AgentSpec(id=2, role="follower", position=[1.0, 0.0], velocity=[0.0, 0.0]),
        ], **kwargs)

    def test_coincident_arrival(self):
        config = self._config(arrival_radius=1.0)
        records = [
            _record(0, 0, (2.0, 0.0, 0.0, 0.0), status=None, level=0),
            _record(0, 1, (2.0, 0.1, 0.0, 0.0)),
            _record(0, 2, (2.1, 0.0, 0.0, 0.0)),
        ]
        summary = metrics(records, config)
        assert summary["arrived"] is True

    def test_stationary_far_agent_not_arrived(self):
        config = self._config(arrival_radius=1.0)
        records = [
            _record(0, 0, (5.0, 0.0, 0.0, 0.0), status=None, level=0),
            _record(0, 1, (5.2, 0.0, 0.0, 0.0)),
            _record(0, 2, (1.0, 0.0, 0.0, 0.0), level=10),
        ]
        summary = metrics(records, config)
        assert summary["arrived"] is False
        assert summary["final"]["graph_distances"][2] == config.rules.hierarchy_cap
        assert summary["final"]["connected"] is False

    def test_min_pairwise_distance(self):
        config = self._config()
        records = [
            _record(0, 0, (0.0, 0.0, 0.0, 0.0), status=None, level=0),
            _record(0, 1, (0.3, 0.0, 0.0, 0.0)),
            _record(0, 2, (3.0, 0.0, 0.0, 0.0)),
        ]
        summary = metrics(records, config)
        assert summary["final"]["min_pairwise_distance"] <= 0.3

    def test_inside_obstacle_count(self):
        from flocknav.geometry import CircleObstacle, CompositeEnvironment
        config = make_config([
            AgentSpec(id=0, role="leader", position=[5.0, 5.0], velocity=[0.0, 0.0]),
            AgentSpec(id=1, role="follower", position=[4.0, 5.0], velocity=[0.0, 0.0]),
        ], environment=CompositeEnvironment(
            obstacles=(CircleObstacle(center=[0.0, 0.0], radius=1.0, margin=0.2),)),
            waypoints=((5.0, 5.0), (6.0, 5.0)))
        records = [
            _record(0, 0, (5.0, 5.0, 0.0, 0.0), status=None, level=0),
            _record(0, 1, (0.5, 0.0, 0.0, 0.0)),  # inside nominal circle
        ]
        summary = metrics(records, config)
        assert summary["final"]["inside_obstacle_count"] == 1


class TestAblations:
    def _config(self, steps=12):
        return make_config([
            AgentSpec(id=0, role="leader", position=[0.0, 0.0], velocity=[0.0, 0.0]),
            AgentSpec(id=1, role="follower", position=[-0.5, 0.15], velocity=[0.0, 0.0]),
            AgentSpec(id=2, role="follower", position=[-1.0, -0.15], velocity=[0.0, 0.0]),
        ], steps=steps)

    def test_unknown_flag_rejected(self):
        with pytest.raises(ValueError):
            apply_ablation(self._config(), "warp-drive")

    def test_none_is_identity_except_flag(self):
        config = self._config()
        assert apply_ablation(config, "none") == config

    def test_static_q_constant_trace(self):
        config = apply_ablation(self._config(), "static-q")
        assert config.rules.tradeoff_gain == 0.0
        records, _ = run(config)
        qs = {r.q for r in records if r.q is not None}
        assert qs == {0.5}

    def test_cs_align_sets_mode(self):
        config = apply_ablation(self._config(), "cs-align")
        assert config.rules.alignment_mode == "cucker-smale"
        records, _ = run(config)
        assert all(r.status == "converged" for r in records if r.status)

    def test_flat_hierarchy_levels_constant(self):
        config = apply_ablation(self._config(), "flat-hierarchy")
        records, _ = run(config)
        follower_levels = {r.level for r in records if r.agent != 0}
        assert follower_levels == {config.rules.flat_level}
        leader_levels = {r.level for r in records if r.agent == 0}
        assert leader_levels == {0}

    def test_horizon_one_prediction_length(self):
        config = apply_ablation(self._config(steps=4), "horizon-1")
        assert config.mpc.horizon == 1
        assert config.mpc.separation_horizon == 1
        world = World(config)
        for _ in range(4):
            step(world)
        for outbox in world.outbox.values():
            for packet in outbox.values():
                assert packet.horizon == 1

    def test_leader_invariant_across_ablations(self):
        base = self._config(steps=10)
        leader_traces = []
        for flag in ("none", "static-q", "cs-align", "flat-hierarchy", "horizon-1"):
            records, _ = run(apply_ablation(base, flag))
            leader_traces.append([r.state for r in records if r.agent == 0])
        for trace in leader_traces[1:]:
            assert trace == leader_traces[0]
