"""Neighbor detection, packet exchange, and per-stage virtual neighborhoods.

Packets are dispatched at the end of a step and read at the start of a later
one; the nominal one-step lag counts as delay 0.  Stale or short predictions
shrink the set of stages a sender contributes to, never the data itself.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Mapping

import numpy as np


@dataclass(frozen=True)
class NeighborPacket:
    """One agent's broadcast: predictions stamped at dispatch time.

    Entry m of the prediction predicts time stamp + 1 + m.  origin_position is
    the sender's position when it dispatched (the one-step-stale position used
    by the ahead/behind test).
    """

    sender: int
    stamp: int
    level: int
    positions: np.ndarray   # (horizon, 2)
    velocities: np.ndarray  # (horizon, 2)
    origin_position: np.ndarray  # (2,)

    @property
    def horizon(self) -> int:
        return len(self.positions)


@dataclass(frozen=True)
class AlignedPrediction:
    """A packet cut to the receiver's stage grid: entry k predicts stage t + k."""

    sender: int
    level: int
    positions: np.ndarray
    velocities: np.ndarray
    origin_position: np.ndarray
    last_stage: int  # highest stage the sender contributes to; -1 if fully stale

    @property
    def coverage(self) -> int:
        return self.last_stage + 1


@dataclass(frozen=True)
class VirtualNeighborhoods:
    """Per-stage contributing agent ids (self always present)."""

    stages: tuple[tuple[int, ...], ...]


def detect_neighbors(positions: Mapping[int, np.ndarray], radius: float) -> dict[int, tuple[int, ...]]:
    """Symmetric proximity adjacency with self-loops: j in N_i iff ||p_i - p_j|| <= r."""
    if not radius > 0.0:
        raise ValueError("detection radius must be positive")
    ids = sorted(positions)
    adjacency = {i: [i] for i in ids}
    for a_idx, i in enumerate(ids):
        for j in ids[a_idx + 1:]:
            if float(np.linalg.norm(positions[i] - positions[j])) <= radius:
                adjacency[i].append(j)
                adjacency[j].append(i)
    return {i: tuple(sorted(nbrs)) for i, nbrs in adjacency.items()}


def align_horizon(packet: NeighborPacket, receiver_horizon: int, now: int) -> AlignedPrediction:
    """Drop entries that predict the past, cap at the receiver's horizon.

    With delay d = now - stamp - 1, the first d entries are stale; of the
    remainder at most receiver_horizon entries are kept.  The usable entries
    are a contiguous, bit-identical slice of the sent sequence.
    """
    delay = now - packet.stamp - 1
    if delay < 0:
        raise ValueError(f"packet from the future: stamp {packet.stamp} read at {now}")
    usable = min(packet.horizon - delay, receiver_horizon)
    if usable <= 0:
        return AlignedPrediction(
            sender=packet.sender, level=packet.level,
            positions=np.zeros((0, 2)), velocities=np.zeros((0, 2)),
            origin_position=packet.origin_position, last_stage=-1,
        )
    return AlignedPrediction(
        sender=packet.sender,
        level=packet.level,
        positions=packet.positions[delay:delay + usable],
        velocities=packet.velocities[delay:delay + usable],
        origin_position=packet.origin_position,
        last_stage=usable - 1,
    )


def virtual_neighborhoods(
    aligned: Iterable[AlignedPrediction], own_id: int, horizon: int
) -> VirtualNeighborhoods:
    """Stage-k members: self plus every sender whose usable range covers k."""
    aligned = list(aligned)
    stages = []
    for k in range(horizon):
        members = {own_id}
        members.update(a.sender for a in aligned if a.last_stage >= k)
        stages.append(tuple(sorted(members)))
    return VirtualNeighborhoods(stages=tuple(stages))


def closest_k(own_position, candidates: Mapping[int, np.ndarray], k: int) -> tuple[int, ...]:
    """Up to k candidate ids by ascending current distance; ties favor lower id."""
    if k < 0:
        raise ValueError("k must be nonnegative")
    own = np.asarray(own_position, dtype=float)
    ranked = sorted(
        candidates,
        key=lambda j: (float(np.linalg.norm(candidates[j] - own)), j),
    )
    return tuple(ranked[:k])
