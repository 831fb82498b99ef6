from __future__ import annotations

import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from flocknav import AgentState, MpcConfig, ReferenceOutputs, pack_instance
from flocknav.mpc import DUMMY_COORDINATE, NEIGHBOR_SLOTS

REPO_ROOT = Path(__file__).resolve().parent.parent
SCENARIO_DIR = REPO_ROOT / "scenarios"


@pytest.fixture(scope="session")
def scenario_dir() -> Path:
    return SCENARIO_DIR


def random_instance(rng: np.random.Generator, config: MpcConfig, *, obstacles=(),
                    n_neighbors: int | None = None):
    """A well-scaled random MpcInstance for gradient and solver tests."""
    from flocknav import CircleObstacle

    T = config.horizon
    state = AgentState(p=rng.normal(scale=0.5, size=2), v=rng.normal(scale=0.5, size=2))
    refs = ReferenceOutputs(
        positions=state.p + rng.normal(scale=0.5, size=(T, 2)),
        velocities=rng.normal(scale=0.5, size=(T, 2)),
    )
    if n_neighbors is None:
        n_neighbors = int(rng.integers(0, NEIGHBOR_SLOTS + 1))
    neighbors = [
        state.p + rng.normal(scale=0.4, size=(T, 2)) for _ in range(n_neighbors)
    ]
    q = float(rng.uniform(0.2, 0.8))
    return pack_instance(state, refs, neighbors, q, obstacles, config)


def finite_difference_gradient(f, u: np.ndarray, h: float = 1e-6) -> np.ndarray:
    grad = np.zeros_like(u)
    flat = grad.reshape(-1)
    base = u.reshape(-1)
    for i in range(base.size):
        up = base.copy()
        up[i] += h
        dn = base.copy()
        dn[i] -= h
        flat[i] = (f(up.reshape(u.shape)) - f(dn.reshape(u.shape))) / (2.0 * h)
    return grad
