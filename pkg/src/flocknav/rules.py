"""Revised flocking rules: hierarchy levels, subjective weights, references, trade-off.

All functions are pure and operate on one agent's local view.  Leaders never
invoke these rules; they hold level 0 and ignore the flock.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np


@dataclass(frozen=True)
class ReferenceOutputs:
    """Per-stage reference positions and velocities (weighted neighbor averages)."""

    positions: np.ndarray   # (T, 2)
    velocities: np.ndarray  # (T, 2)


@dataclass(frozen=True)
class TradeoffWeight:
    """Cohesion/alignment trade-off q and the induced diagonal output weight."""

    q: float

    @property
    def matrix(self) -> np.ndarray:
        q = self.q
        complement = 1.0 - q
        # Nudge the rounded complement by at most one ulp so the diagonal
        # (c, c, q, q) sums to exactly 2.
        for candidate in (complement, np.nextafter(complement, 2.0), np.nextafter(complement, 0.0)):
            if ((candidate + candidate) + q) + q == 2.0:
                complement = candidate
                break
        return np.diag([complement, complement, q, q])


def update_hierarchy(is_leader: bool, neighbor_levels: Sequence[int], cap: int) -> int:
    """Level update: leaders stay 0; followers take min(cap, 1 + min neighbor level).

    An empty neighborhood (isolated agent, or a cluster detached from every
    leader) returns the cap.
    """
    if is_leader:
        return 0
    levels = list(neighbor_levels)
    if not levels:
        return cap
    return min(cap, 1 + min(levels))


def cohesion_weights(levels: Sequence[int]) -> np.ndarray:
    """Normalized 2^(-level) weights: each hierarchy step halves the influence."""
    if len(levels) == 0:
        raise ValueError("cohesion weights need at least one member")
    raw = np.array([2.0 ** (-float(level)) for level in levels])
    return raw / raw.sum()


def classify_ahead(own_velocity, own_position, neighbor_position) -> bool:
    """Ahead iff <v, p_neighbor - p_own> >= 0; ties (including v = 0) are ahead."""
    v = np.asarray(own_velocity, dtype=float)
    diff = np.asarray(neighbor_position, dtype=float) - np.asarray(own_position, dtype=float)
    return bool(v @ diff >= 0.0)


def alignment_weights(ahead_flags: Sequence[bool], behind_weight: float) -> np.ndarray:
    """Raw weight 1 for ahead members, behind_weight otherwise, normalized to sum 1."""
    if len(ahead_flags) == 0:
        raise ValueError("alignment weights need at least one member")
    raw = np.array([1.0 if ahead else behind_weight for ahead in ahead_flags])
    total = raw.sum()
    if total <= 0.0:
        raise ValueError("alignment weights vanished (behind_weight=0 with no ahead member)")
    return raw / total


def cucker_smale_weights(sq_distances: Sequence[float]) -> np.ndarray:
    """Classic distance-decay alignment: raw 1/(1 + d^2), normalized (ablation)."""
    raw = np.array([1.0 / (1.0 + float(d)) for d in sq_distances])
    return raw / raw.sum()


def reference_outputs(
    stage_members: Sequence[Sequence[int]],
    positions: Mapping[int, np.ndarray],
    velocities: Mapping[int, np.ndarray],
    levels: Mapping[int, int],
    own_id: int,
    ahead: Mapping[int, bool] | None = None,
    behind_weight: float = 0.2,
    alignment_raw: Mapping[int, float] | None = None,
) -> ReferenceOutputs:
    """Per-stage weighted averages of neighbor predictions.

    ``stage_members`` lists the contributing agent ids per prediction stage
    (self must appear at every stage).  Position averages use cohesion
    weights from the members' hierarchy levels; velocity averages use
    orientation weights from ``ahead``/``behind_weight``, fixed for the whole
    sampling time, unless explicit raw weights are supplied via
    ``alignment_raw`` (Cucker-Smale ablation).  With no external members a
    stage reduces to the agent's own previously predicted output.
    """
    horizon = len(stage_members)
    ref_p = np.zeros((horizon, 2))
    ref_v = np.zeros((horizon, 2))
    for k, members in enumerate(stage_members):
        members = sorted(members)
        if own_id not in members:
            raise ValueError(f"self must be a member of every stage (missing at {k})")
        for member in members:
            if len(positions[member]) <= k:
                raise ValueError(
                    f"agent {member} contributes at stage {k} but its prediction "
                    f"has only {len(positions[member])} entries"
                )
        w_coh = cohesion_weights([levels[m] for m in members])
        if alignment_raw is not None:
            raw = np.array([alignment_raw[m] for m in members])
            w_ali = raw / raw.sum()
        else:
            if ahead is None:
                raise ValueError("either ahead flags or alignment_raw is required")
            w_ali = alignment_weights([ahead[m] for m in members], behind_weight)
        for weight_p, weight_v, member in zip(w_coh, w_ali, members):
            ref_p[k] += weight_p * positions[member][k]
            ref_v[k] += weight_v * velocities[member][k]
    return ReferenceOutputs(positions=ref_p, velocities=ref_v)


def tradeoff_weight(
    own_position,
    reference_position_now,
    q_static: float,
    gain: float,
    saturation: tuple[float, float],
) -> TradeoffWeight:
    """Distance-adaptive trade-off q = q_st / (1 + gain * ||p - p_ref||^2), clamped.

    Far from the reference center of mass, q drops and position tracking
    (cohesion) dominates; close by, velocity tracking (alignment) takes over.
    gain = 0 recovers the conventional static trade-off.
    """
    lo, hi = saturation
    if not 0.0 <= lo <= hi <= 1.0:
        raise ValueError("saturation bounds must satisfy 0 <= lo <= hi <= 1")
    diff = np.asarray(own_position, dtype=float) - np.asarray(reference_position_now, dtype=float)
    q = q_static / (1.0 + gain * float(diff @ diff))
    return TradeoffWeight(q=float(min(hi, max(lo, q))))
