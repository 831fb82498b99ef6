from __future__ import annotations

import itertools

import numpy as np
import pytest

from flocknav.comms import (
    NeighborPacket,
    align_horizon,
    closest_k,
    detect_neighbors,
    virtual_neighborhoods,
)


def make_packet(sender=1, stamp=-1, level=2, horizon=8):
    rng = np.random.default_rng(sender * 100 + stamp + 50)
    return NeighborPacket(
        sender=sender, stamp=stamp, level=level,
        positions=rng.normal(size=(horizon, 2)),
        velocities=rng.normal(size=(horizon, 2)),
        origin_position=rng.normal(size=2),
    )


class TestDetectNeighbors:
    def test_within_radius(self):
        adj = detect_neighbors({0: np.array([0.0, 0.0]), 1: np.array([0.5, 0.0])}, radius=1.0)
        assert adj[0] == (0, 1)
        assert adj[1] == (0, 1)

    def test_boundary_is_adjacent(self):
        adj = detect_neighbors({0: np.array([0.0, 0.0]), 1: np.array([1.0, 0.0])}, radius=1.0)
        assert adj[0] == (0, 1)

    def test_single_agent_self_loop(self):
        assert detect_neighbors({3: np.array([1.0, 1.0])}, radius=2.0) == {3: (3,)}

    def test_symmetric(self):
        rng = np.random.default_rng(4)
        positions = {i: rng.uniform(-2, 2, 2) for i in range(8)}
        adj = detect_neighbors(positions, radius=1.3)
        for i, j in itertools.permutations(adj, 2):
            assert (j in adj[i]) == (i in adj[j])


class TestAlignHorizon:
    def test_matched_horizons_nominal_delay(self):
        packet = make_packet(stamp=4, horizon=8)
        aligned = align_horizon(packet, receiver_horizon=8, now=5)
        assert aligned.last_stage == 7
        np.testing.assert_array_equal(aligned.positions, packet.positions)

    def test_short_sender_horizon(self):
        packet = make_packet(stamp=4, horizon=5)
        aligned = align_horizon(packet, receiver_horizon=8, now=5)
        assert aligned.last_stage == 4
        np.testing.assert_array_equal(aligned.positions, packet.positions)

    def test_two_step_extra_delay(self):
        packet = make_packet(stamp=2, horizon=8)
        aligned = align_horizon(packet, receiver_horizon=8, now=5)
        assert aligned.last_stage == 5  # 6 usable entries, stages 0..5
        np.testing.assert_array_equal(aligned.positions, packet.positions[2:8])
        np.testing.assert_array_equal(aligned.velocities, packet.velocities[2:8])

    def test_long_sender_horizon_truncated(self):
        packet = make_packet(stamp=4, horizon=12)
        aligned = align_horizon(packet, receiver_horizon=8, now=5)
        assert aligned.last_stage == 7
        np.testing.assert_array_equal(aligned.positions, packet.positions[:8])

    def test_fully_stale_packet(self):
        packet = make_packet(stamp=0, horizon=3)
        aligned = align_horizon(packet, receiver_horizon=8, now=4)
        assert aligned.last_stage == -1
        assert aligned.coverage == 0

    def test_future_packet_rejected(self):
        packet = make_packet(stamp=5, horizon=8)
        with pytest.raises(ValueError):
            align_horizon(packet, receiver_horizon=8, now=5)

    def test_conservation_contiguous_subsequence(self):
        packet = make_packet(stamp=1, horizon=10)
        for now in range(2, 14):
            aligned = align_horizon(packet, receiver_horizon=6, now=now)
            delay = now - packet.stamp - 1
            if aligned.coverage:
                np.testing.assert_array_equal(
                    aligned.positions, packet.positions[delay:delay + aligned.coverage]
                )


class TestVirtualNeighborhoods:
    def test_no_packets_all_self(self):
        vn = virtual_neighborhoods([], own_id=7, horizon=4)
        assert vn.stages == ((7,),) * 4

    def test_partial_coverage(self):
        packet = make_packet(sender=3, stamp=-1, horizon=5)
        aligned = align_horizon(packet, receiver_horizon=8, now=0)
        vn = virtual_neighborhoods([aligned], own_id=0, horizon=8)
        assert vn.stages[:5] == ((0, 3),) * 5
        assert vn.stages[5:] == ((0,),) * 3

    def test_full_coverage(self):
        aligned = [
            align_horizon(make_packet(sender=s, stamp=-1, horizon=8), 8, 0)
            for s in (1, 2)
        ]
        vn = virtual_neighborhoods(aligned, own_id=0, horizon=8)
        assert all(stage == (0, 1, 2) for stage in vn.stages)

    def test_delay_monotonicity(self):
        packets = [make_packet(sender=s, stamp=0, horizon=8) for s in (1, 2, 3)]
        sizes = []
        for now in range(1, 12):
            aligned = [align_horizon(p, 8, now) for p in packets]
            vn = virtual_neighborhoods(aligned, own_id=0, horizon=8)
            sizes.append([len(stage) for stage in vn.stages])
        for earlier, later in zip(sizes, sizes[1:]):
            assert all(b <= a for a, b in zip(earlier, later))

    def test_equal_horizons_zero_delay_match_detection(self):
        detected = (1, 2, 5)
        aligned = [align_horizon(make_packet(sender=s, stamp=3, horizon=8), 8, 4) for s in detected]
        vn = virtual_neighborhoods(aligned, own_id=0, horizon=8)
        assert all(stage == (0,) + detected for stage in vn.stages)


class TestClosestK:
    def test_fewer_candidates_than_k(self):
        candidates = {1: np.array([1.0, 0.0]), 2: np.array([2.0, 0.0]), 3: np.array([0.5, 0.0])}
        assert closest_k([0.0, 0.0], candidates, 5) == (3, 1, 2)

    def test_two_nearest(self):
        candidates = {1: np.array([2.0, 0.0]), 2: np.array([1.0, 0.0]), 3: np.array([3.0, 0.0])}
        assert closest_k([0.0, 0.0], candidates, 2) == (2, 1)

    def test_tie_breaks_by_lower_id(self):
        candidates = {9: np.array([1.0, 0.0]), 4: np.array([-1.0, 0.0])}
        assert closest_k([0.0, 0.0], candidates, 1) == (4,)

    def test_matches_exhaustive_small_oracle(self):
        rng = np.random.default_rng(12)
        for _ in range(100):
            n = int(rng.integers(1, 7))
            ids = rng.choice(50, size=n, replace=False)
            candidates = {int(i): rng.integers(-2, 3, 2).astype(float) for i in ids}
            own = rng.integers(-2, 3, 2).astype(float)
            k = int(rng.integers(0, n + 2))
            expected = sorted(
                candidates,
                key=lambda j: (float(np.linalg.norm(candidates[j] - own)), j),
            )[:k]
            assert closest_k(own, candidates, k) == tuple(expected)
