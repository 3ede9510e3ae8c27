"""Pieces shared by both benchmark worlds."""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

MAX_OBSTACLE_SPEED = 0.5  # m/s


class Termination(enum.Enum):
    RUNNING = "running"
    GOAL_REACHED = "goal_reached"
    COLLIDED = "collided"
    STEP_LIMIT = "step_limit"


@dataclass(frozen=True)
class Obstacle:
    """Disc obstacle; velocity is zero for static obstacles."""

    center: np.ndarray   # (2,)
    radius: float
    velocity: np.ndarray  # (2,)

    def __post_init__(self) -> None:
        center = np.asarray(self.center, dtype=np.float64)
        velocity = np.asarray(self.velocity, dtype=np.float64)
        object.__setattr__(self, "center", center)
        object.__setattr__(self, "velocity", velocity)
        if center.shape != (2,) or velocity.shape != (2,):
            raise ValueError("center and velocity must be 2-vectors")
        if not self.radius > 0.0:
            raise ValueError("radius must be positive")
        speed = float(np.hypot(*velocity))
        if speed > MAX_OBSTACLE_SPEED + 1e-12:
            raise ValueError(f"obstacle speed {speed:.3f} exceeds {MAX_OBSTACLE_SPEED} m/s")


@dataclass(frozen=True)
class Context:
    """Fixed-length environment description plus a per-slot validity mask."""

    values: np.ndarray
    valid: np.ndarray

    def __post_init__(self) -> None:
        object.__setattr__(self, "values", np.asarray(self.values, dtype=np.float64))
        object.__setattr__(self, "valid", np.asarray(self.valid, dtype=bool))


def advance_obstacles(
    obstacles: tuple[Obstacle, ...], bounds: tuple[float, float, float, float], dt: float
) -> tuple[Obstacle, ...]:
    """Move obstacles one step; velocity components reflect elastically off the
    bounds (x_min, y_min, x_max, y_max)."""
    x_min, y_min, x_max, y_max = bounds
    moved = []
    for obs in obstacles:
        center = obs.center + obs.velocity * dt
        velocity = obs.velocity.copy()
        if center[0] <= x_min or center[0] >= x_max:
            velocity[0] = -velocity[0]
        if center[1] <= y_min or center[1] >= y_max:
            velocity[1] = -velocity[1]
        moved.append(Obstacle(center=center, radius=obs.radius, velocity=velocity))
    return tuple(moved)


def obstacle_arrays(obstacles: tuple[Obstacle, ...]) -> tuple[np.ndarray, np.ndarray]:
    """(N, 2) centers and (N,) radii for vectorised distance tests."""
    if not obstacles:
        return np.zeros((0, 2)), np.zeros(0)
    centers = np.stack([o.center for o in obstacles])
    radii = np.array([o.radius for o in obstacles])
    return centers, radii


def hits_obstacle(xy: np.ndarray, centers: np.ndarray, radii: np.ndarray, margin: float = 0.0) -> np.ndarray:
    """Boolean (B,) overlap test for points (B, 2) against disc obstacles."""
    if centers.shape[0] == 0:
        return np.zeros(xy.shape[0], dtype=bool)
    d2 = np.sum((xy[:, None, :] - centers[None, :, :]) ** 2, axis=-1)
    return np.any(d2 < (radii[None, :] + margin) ** 2, axis=1)
