"""Planar navigation: drive a unicycle to a goal through disc obstacles.

State [x, y, heading], control [speed, turn rate].  Running cost is the
distance to the goal plus a 10000 penalty whenever the agent overlaps an
obstacle or leaves the workspace; terminal cost is zero.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..rng import SeededRng, _wrap_quiet, wrap_angle
from .base import (
    Context,
    Obstacle,
    Termination,
    advance_obstacles,
    hits_obstacle,
    obstacle_arrays,
)

OBSTACLE_PENALTY = 10000.0
GOAL_RADIUS = 0.5          # m
CONTROL_LOW = np.array([0.0, -1.0])
CONTROL_HIGH = np.array([2.0, 1.0])
CONTEXT_SLOTS = 15         # obstacle slots in the context vector


@dataclass(frozen=True)
class NavWorld:
    bounds: tuple[float, float, float, float]  # x_min, y_min, x_max, y_max
    obstacles: tuple[Obstacle, ...]
    goal: np.ndarray       # (2,)
    start: np.ndarray      # (3,) pose
    agent_radius: float = 0.2
    dt: float = 0.1
    max_steps: int = 150

    def __post_init__(self) -> None:
        goal = np.asarray(self.goal, dtype=np.float64)
        start = np.asarray(self.start, dtype=np.float64)
        object.__setattr__(self, "goal", goal)
        object.__setattr__(self, "start", start)
        if not self.dt > 0.0:
            raise ValueError("dt must be positive")
        x_min, y_min, x_max, y_max = self.bounds
        if not (x_min < goal[0] < x_max and y_min < goal[1] < y_max):
            raise ValueError("goal must lie inside the bounds")
        # Obstacle clearance of the goal is enforced at world generation time
        # only; dynamic obstacles may sweep over the goal mid-episode.


def unicycle_step(states: np.ndarray, controls: np.ndarray, dt: float) -> np.ndarray:
    """Forward-Euler unicycle step for (B, 3) states and (B, 2) [v, w] controls."""
    x, y, heading = states[:, 0], states[:, 1], states[:, 2]
    v, w = controls[:, 0], controls[:, 1]
    return np.stack(
        [
            x + dt * v * np.cos(heading),
            y + dt * v * np.sin(heading),
            _wrap_quiet(heading + dt * w),
        ],
        axis=1,
    )


def _nav_cost(
    states: np.ndarray,
    goal: np.ndarray,
    bounds: tuple[float, float, float, float],
    centers: np.ndarray,
    radii: np.ndarray,
    agent_radius: float,
) -> np.ndarray:
    xy = states[:, :2]
    dist = np.linalg.norm(xy - goal, axis=1)
    bad = hits_obstacle(xy, centers, radii, agent_radius)
    x_min, y_min, x_max, y_max = bounds
    oob = (
        (xy[:, 0] < x_min) | (xy[:, 0] > x_max) | (xy[:, 1] < y_min) | (xy[:, 1] > y_max)
    )
    return dist + OBSTACLE_PENALTY * (bad | oob)


def nav_running_cost(states: np.ndarray, world: NavWorld) -> np.ndarray:
    """Distance to goal plus the big penalty for collision or leaving bounds."""
    centers, radii = obstacle_arrays(world.obstacles)
    return _nav_cost(states, world.goal, world.bounds, centers, radii, world.agent_radius)


def nav_context(goal: np.ndarray, obstacles: tuple[Obstacle, ...]) -> Context:
    """[goal_x, goal_y, obs1_x, obs1_y, ...] with zero-padded empty slots."""
    values = np.zeros(2 + 2 * CONTEXT_SLOTS)
    valid = np.zeros(2 + 2 * CONTEXT_SLOTS, dtype=bool)
    values[:2] = goal
    valid[:2] = True
    for i, obs in enumerate(obstacles[:CONTEXT_SLOTS]):
        values[2 + 2 * i : 4 + 2 * i] = obs.center
        valid[2 + 2 * i : 4 + 2 * i] = True
    return Context(values=values, valid=valid)


class NavigationEnv:
    """Closed-loop navigation episode; also serves rollouts with a frozen world.

    The world dataclass is the immutable episode definition; the live obstacle
    set (which only changes between control steps) lives on the env.
    """

    env_id = 0
    state_dim = 3
    control_dim = 2
    control_low = CONTROL_LOW
    control_high = CONTROL_HIGH

    def __init__(self, world: NavWorld):
        self.world = world
        self.state = world.start.copy()
        self.steps = 0
        self.obstacles = world.obstacles
        self._centers, self._radii = obstacle_arrays(world.obstacles)
        self._dynamic = any(np.any(o.velocity != 0.0) for o in world.obstacles)

    @property
    def dt(self) -> float:
        return self.world.dt

    @property
    def max_steps(self) -> int:
        return self.world.max_steps

    # Rollout interface (pure in the frozen world snapshot).
    def step(self, states: np.ndarray, controls: np.ndarray) -> np.ndarray:
        return unicycle_step(states, controls, self.world.dt)

    def running_cost(self, states: np.ndarray, prev_controls: np.ndarray | None = None) -> np.ndarray:
        return _nav_cost(
            states, self.world.goal, self.world.bounds,
            self._centers, self._radii, self.world.agent_radius,
        )

    def terminal_cost(self, states: np.ndarray) -> np.ndarray:
        return np.zeros(states.shape[0])

    def context(self) -> Context:
        return nav_context(self.world.goal, self.obstacles)

    # Realised-trajectory interface.
    def advance(self, control: np.ndarray) -> np.ndarray:
        self.state = unicycle_step(self.state[None, :], control[None, :], self.world.dt)[0]
        if self._dynamic:
            self.obstacles = advance_obstacles(self.obstacles, self.world.bounds, self.world.dt)
            self._centers, self._radii = obstacle_arrays(self.obstacles)
        self.steps += 1
        return self.state

    def status(self) -> Termination:
        xy = self.state[None, :2]
        if np.linalg.norm(self.state[:2] - self.world.goal) < GOAL_RADIUS:
            return Termination.GOAL_REACHED
        x_min, y_min, x_max, y_max = self.world.bounds
        oob = not (x_min <= self.state[0] <= x_max and y_min <= self.state[1] <= y_max)
        if oob or hits_obstacle(xy, self._centers, self._radii, self.world.agent_radius)[0]:
            return Termination.COLLIDED
        if self.steps >= self.world.max_steps:
            return Termination.STEP_LIMIT
        return Termination.RUNNING


def make_navigation_env(
    seed: int,
    num_obstacles: int = 15,
    obstacle_radius: float = 1.0,
    num_dynamic: int = 0,
    speed_range: tuple[float, float] = (0.1, 0.5),
    bounds: tuple[float, float, float, float] = (0.0, 0.0, 20.0, 20.0),
    max_steps: int = 150,
    dt: float = 0.1,
) -> NavigationEnv:
    """Random world: start near one corner, goal near the opposite one,
    obstacle centers rejection-sampled so that start and goal stay clear."""
    rng = SeededRng(seed, 0xE17).generator
    x_min, y_min, x_max, y_max = bounds
    start_xy = rng.uniform([x_min + 1.0, y_min + 1.0], [x_min + 3.0, y_min + 3.0])
    goal = rng.uniform([x_max - 3.0, y_max - 3.0], [x_max - 1.0, y_max - 1.0])
    # Face roughly toward the goal; the step budget leaves no room for a
    # full turn-in-place at the start.
    bearing = np.arctan2(goal[1] - start_xy[1], goal[0] - start_xy[0])
    heading = wrap_angle(bearing + rng.uniform(-np.pi / 4, np.pi / 4))

    agent_radius = 0.2
    clearance = obstacle_radius + agent_radius + 1.0
    # Keep a corridor wider than the agent between any two obstacles so the
    # worlds stay solvable; rejection-sample until everything fits.
    pair_spacing = 2.0 * (obstacle_radius + agent_radius) + 1.0
    obstacles: list[Obstacle] = []
    attempts = 0
    while len(obstacles) < num_obstacles:
        attempts += 1
        if attempts > 200 * max(1, num_obstacles):
            raise RuntimeError(f"could not place {num_obstacles} obstacles with seed {seed}")
        center = rng.uniform(
            [x_min + obstacle_radius, y_min + obstacle_radius],
            [x_max - obstacle_radius, y_max - obstacle_radius],
        )
        if np.linalg.norm(center - start_xy) < clearance:
            continue
        if np.linalg.norm(center - goal) < clearance:
            continue
        if any(np.linalg.norm(center - o.center) < pair_spacing for o in obstacles):
            continue
        velocity = np.zeros(2)
        if len(obstacles) < num_dynamic:
            speed = rng.uniform(*speed_range)
            angle = rng.uniform(-np.pi, np.pi)
            velocity = speed * np.array([np.cos(angle), np.sin(angle)])
        obstacles.append(Obstacle(center=center, radius=obstacle_radius, velocity=velocity))

    world = NavWorld(
        bounds=bounds,
        obstacles=tuple(obstacles),
        goal=goal,
        start=np.array([start_xy[0], start_xy[1], heading]),
        agent_radius=agent_radius,
        dt=dt,
        max_steps=max_steps,
    )
    return NavigationEnv(world)
