"""Obstacle geometry: smooth boundary maps, avoidance residuals, containment."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


def _as_point(value) -> np.ndarray:
    point = np.asarray(value, dtype=float)
    if point.shape != (2,):
        raise ValueError(f"expected a 2-vector, got shape {point.shape}")
    return point


@dataclass(frozen=True)
class CircleObstacle:
    """Disc {x : ||x - center||^2 - radius^2 < 0}, enlarged by a safety margin."""

    center: np.ndarray
    radius: float
    margin: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "center", _as_point(self.center))
        if not self.radius > 0.0:
            raise ValueError("circle radius must be positive")
        if self.margin < 0.0:
            raise ValueError("margin must be nonnegative")


@dataclass(frozen=True)
class RectangleObstacle:
    """Axis-aligned box, enlarged by pushing both corners out by the margin."""

    min_corner: np.ndarray
    max_corner: np.ndarray
    margin: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "min_corner", _as_point(self.min_corner))
        object.__setattr__(self, "max_corner", _as_point(self.max_corner))
        if not np.all(self.max_corner > self.min_corner):
            raise ValueError("max corner must strictly dominate min corner")
        if self.margin < 0.0:
            raise ValueError("margin must be nonnegative")


Obstacle = CircleObstacle | RectangleObstacle


@dataclass(frozen=True)
class CompositeEnvironment:
    """Static scene: a list of obstacles and optional rectangular arena bounds."""

    obstacles: tuple[Obstacle, ...] = ()
    bounds: tuple[np.ndarray, np.ndarray] | None = None

    def __post_init__(self):
        object.__setattr__(self, "obstacles", tuple(self.obstacles))
        if self.bounds is not None:
            lo, hi = self.bounds
            lo, hi = _as_point(lo), _as_point(hi)
            if not np.all(hi > lo):
                raise ValueError("arena bounds must have max > min componentwise")
            object.__setattr__(self, "bounds", (lo, hi))


def obstacle_h(obstacle: Obstacle, point, *, use_margin: bool = True) -> np.ndarray:
    """Smooth component functions h(x); all components < 0 iff strictly inside.

    Circle: single entry ||x - c||^2 - (r + margin)^2.  Rectangle: the four
    affine gaps (x - x_max, x_min - x, y - y_max, y_min - y) with margins
    applied to the corners.
    """
    point = _as_point(point)
    margin = obstacle.margin if use_margin else 0.0
    if isinstance(obstacle, CircleObstacle):
        diff = point - obstacle.center
        return np.array([diff @ diff - (obstacle.radius + margin) ** 2])
    lo = obstacle.min_corner - margin
    hi = obstacle.max_corner + margin
    return np.array([point[0] - hi[0], lo[0] - point[0],
                     point[1] - hi[1], lo[1] - point[1]])


def avoidance_residual(obstacle: Obstacle, point) -> float:
    """(prod_i min{0, h_i(x)})^2: zero iff x is outside or on the enlarged boundary."""
    return float(residuals_along(obstacle, _as_point(point)[None, :])[0])


def residual_gradient(obstacle: Obstacle, point) -> np.ndarray:
    """Analytic gradient of avoidance_residual; identically zero outside."""
    return residual_gradients_along(obstacle, _as_point(point)[None, :])[0]


def residuals_along(obstacle: Obstacle, points: np.ndarray) -> np.ndarray:
    """avoidance_residual evaluated at each row of an (n, 2) array."""
    points = np.asarray(points, dtype=float)
    margin = obstacle.margin
    if isinstance(obstacle, CircleObstacle):
        h = np.sum((points - obstacle.center) ** 2, axis=1) - (obstacle.radius + margin) ** 2
        return np.minimum(0.0, h) ** 2
    lo = obstacle.min_corner - margin
    hi = obstacle.max_corner + margin
    h = np.stack([points[:, 0] - hi[0], lo[0] - points[:, 0],
                  points[:, 1] - hi[1], lo[1] - points[:, 1]], axis=1)
    return np.prod(np.minimum(0.0, h), axis=1) ** 2


def residual_gradients_along(obstacle: Obstacle, points: np.ndarray) -> np.ndarray:
    """residual_gradient evaluated at each row of an (n, 2) array."""
    points = np.asarray(points, dtype=float)
    margin = obstacle.margin
    if isinstance(obstacle, CircleObstacle):
        diff = points - obstacle.center
        h = np.sum(diff**2, axis=1) - (obstacle.radius + margin) ** 2
        return 4.0 * np.minimum(0.0, h)[:, None] * diff
    lo = obstacle.min_corner - margin
    hi = obstacle.max_corner + margin
    h = np.stack([points[:, 0] - hi[0], lo[0] - points[:, 0],
                  points[:, 1] - hi[1], lo[1] - points[:, 1]], axis=1)
    c = np.minimum(0.0, h)
    prod = np.prod(c, axis=1)
    grads = np.zeros_like(points)
    inside = prod != 0.0
    if np.any(inside):
        ci = c[inside]
        scale = 2.0 * prod[inside] ** 2
        grads[inside, 0] = scale * (1.0 / ci[:, 0] - 1.0 / ci[:, 1])
        grads[inside, 1] = scale * (1.0 / ci[:, 2] - 1.0 / ci[:, 3])
    return grads


def contains(obstacle: Obstacle, point, use_margin: bool) -> bool:
    """True iff the point is strictly inside (boundary counts as outside)."""
    return bool(np.all(obstacle_h(obstacle, point, use_margin=use_margin) < 0.0))


def distance_to(obstacle: Obstacle, point) -> float:
    """Euclidean distance to the enlarged obstacle (0 inside); used for sensing."""
    point = _as_point(point)
    if isinstance(obstacle, CircleObstacle):
        gap = np.linalg.norm(point - obstacle.center) - (obstacle.radius + obstacle.margin)
        return float(max(0.0, gap))
    lo = obstacle.min_corner - obstacle.margin
    hi = obstacle.max_corner + obstacle.margin
    excess = np.maximum(0.0, np.maximum(lo - point, point - hi))
    return float(np.linalg.norm(excess))
