"""Autonomous racing on a closed track with a kinematic bicycle.

State [x, y, yaw, speed], control [acceleration, steering angle].  The reward
of the source task (speed, centering, drift and boundary penalties) is
minimised with its sign flipped, so faster, centered, on-track driving has
lower cost.  Obstacles on the track share the boundary penalty so the solver
steers around them.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from ..rng import SeededRng, _wrap_quiet
from .base import (
    Context,
    Obstacle,
    Termination,
    advance_obstacles,
    hits_obstacle,
    obstacle_arrays,
)

SPEED_REWARD = 2.0
DRIFT_PENALTY = 5000.0
BOUNDARY_PENALTY = 1.0e6
CONTROL_LOW = np.array([-2.0, -0.25])
CONTROL_HIGH = np.array([2.0, 0.25])
CONTEXT_POINTS = 10        # upcoming centerline points in the context vector
CONTEXT_SPACING = 2.0      # m of arclength between them


@dataclass(frozen=True)
class VehicleParams:
    l_f: float = 1.0          # front axle to CoG, m
    l_r: float = 1.0          # rear axle to CoG, m
    beta_max: float = np.pi / 4

    def __post_init__(self) -> None:
        if self.l_f <= 0.0 or self.l_r <= 0.0:
            raise ValueError("axle distances must be positive")


def _segments_intersect(a0, a1, b0, b1) -> bool:
    def orient(p, q, r):
        return (q[0] - p[0]) * (r[1] - p[1]) - (q[1] - p[1]) * (r[0] - p[0])

    d1, d2 = orient(b0, b1, a0), orient(b0, b1, a1)
    d3, d4 = orient(a0, a1, b0), orient(a0, a1, b1)
    return ((d1 > 0) != (d2 > 0)) and ((d3 > 0) != (d4 > 0))


@dataclass(frozen=True)
class Track:
    centerline: np.ndarray   # (P, 2), closed implicitly (last connects to first)
    half_width: float
    start_pose: np.ndarray   # (4,) [x, y, yaw, speed]
    max_steps: int = 500
    obstacles: tuple[Obstacle, ...] = ()

    def __post_init__(self) -> None:
        pts = np.asarray(self.centerline, dtype=np.float64)
        start = np.asarray(self.start_pose, dtype=np.float64)
        object.__setattr__(self, "centerline", pts)
        object.__setattr__(self, "start_pose", start)
        if pts.ndim != 2 or pts.shape[0] < 3 or pts.shape[1] != 2:
            raise ValueError("centerline must be (P, 2) with P >= 3")
        seg = np.roll(pts, -1, axis=0) - pts
        lengths = np.linalg.norm(seg, axis=1)
        if np.any(lengths < 1e-9):
            raise ValueError("centerline contains a zero-length segment")
        if not self.half_width > 0.0:
            raise ValueError("half_width must be positive")
        p = pts.shape[0]
        ends = np.roll(pts, -1, axis=0)
        for i in range(p):
            for j in range(i + 2, p):
                if i == 0 and j == p - 1:
                    continue  # adjacent through the wrap
                if _segments_intersect(pts[i], ends[i], pts[j], ends[j]):
                    raise ValueError(f"centerline self-intersects (segments {i} and {j})")
        object.__setattr__(self, "_seg_start", pts)
        object.__setattr__(self, "_seg_dir", seg)
        object.__setattr__(self, "_seg_len", lengths)
        object.__setattr__(self, "_cum_len", np.concatenate([[0.0], np.cumsum(lengths)]))

    @property
    def total_length(self) -> float:
        return float(self._cum_len[-1])

    def point_at(self, s: float | np.ndarray) -> np.ndarray:
        """Centerline point(s) at arclength s (wrapped)."""
        s = np.mod(np.asarray(s, dtype=np.float64), self.total_length)
        idx = np.clip(np.searchsorted(self._cum_len, s, side="right") - 1, 0, len(self._seg_len) - 1)
        t = (s - self._cum_len[idx]) / self._seg_len[idx]
        return self._seg_start[idx] + t[..., None] * self._seg_dir[idx]

    def bounding_box(self, margin: float = 0.0) -> tuple[float, float, float, float]:
        lo = self.centerline.min(axis=0) - self.half_width - margin
        hi = self.centerline.max(axis=0) + self.half_width + margin
        return (lo[0], lo[1], hi[0], hi[1])


def track_frame(points: np.ndarray, track: Track) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Project (B, 2) points onto the track centerline.

    Returns (signed lateral offset, arclength of the projection, off_track flag);
    positive offset is to the left of the direction of travel.
    """
    points = np.asarray(points, dtype=np.float64)
    squeeze = points.ndim == 1
    p = points[None, :] if squeeze else points
    rel = p[:, None, :] - track._seg_start[None, :, :]              # (B, P, 2)
    seg_len2 = np.sum(track._seg_dir**2, axis=1)                    # (P,)
    t = np.clip(np.einsum("bpc,pc->bp", rel, track._seg_dir) / seg_len2, 0.0, 1.0)
    proj = track._seg_start[None] + t[..., None] * track._seg_dir[None]
    diff = p[:, None, :] - proj
    dist2 = np.sum(diff**2, axis=-1)
    best = np.argmin(dist2, axis=1)                                 # (B,)
    rows = np.arange(p.shape[0])
    direction = track._seg_dir[best] / track._seg_len[best][:, None]
    offset_vec = diff[rows, best]
    cross = direction[:, 0] * offset_vec[:, 1] - direction[:, 1] * offset_vec[:, 0]
    d = np.sign(cross) * np.sqrt(dist2[rows, best])
    s = track._cum_len[best] + t[rows, best] * track._seg_len[best]
    off = np.abs(d) > track.half_width
    if squeeze:
        return float(d[0]), float(s[0]), bool(off[0])
    return d, s, off


def slip_angle(steer: np.ndarray, params: VehicleParams) -> np.ndarray:
    """Angle between the velocity vector and the longitudinal axis."""
    return np.arctan(params.l_r * np.tan(steer) / (params.l_f + params.l_r))


def bicycle_step(
    states: np.ndarray, controls: np.ndarray, params: VehicleParams, dt: float
) -> np.ndarray:
    """Forward-Euler kinematic bicycle step for (B, 4) states and (B, 2) controls."""
    x, y, yaw, v = states[:, 0], states[:, 1], states[:, 2], states[:, 3]
    accel, steer = controls[:, 0], controls[:, 1]
    beta = slip_angle(steer, params)
    return np.stack(
        [
            x + dt * v * np.cos(yaw + beta),
            y + dt * v * np.sin(yaw + beta),
            _wrap_quiet(yaw + dt * v * np.sin(beta) / params.l_r),
            np.maximum(v + dt * accel, 0.0),
        ],
        axis=1,
    )


def racing_running_cost(
    states: np.ndarray,
    prev_controls: np.ndarray | None,
    track: Track,
    params: VehicleParams,
) -> np.ndarray:
    """-2|v| + |d| + 5000*[drift over the limit] + 1e6*[outside the lane].

    The drift indicator needs the steering that produced the state, so the
    previous control is threaded in; under the kinematic model the slip angle
    stays below the limit for all admissible steering.
    """
    v = states[:, 3]
    d, _, off = track_frame(states[:, :2], track)
    if prev_controls is None:
        beta = np.zeros(states.shape[0])
    else:
        beta = slip_angle(prev_controls[:, 1], params)
    drifting = np.abs(beta) > params.beta_max
    return -SPEED_REWARD * np.abs(v) + np.abs(d) + DRIFT_PENALTY * drifting + BOUNDARY_PENALTY * off


def racing_context(track: Track, state: np.ndarray) -> Context:
    """Upcoming centerline points in the vehicle frame, fixed arclength spacing."""
    _, s, _ = track_frame(state[None, :2], track)
    ahead = s[0] + CONTEXT_SPACING * np.arange(1, CONTEXT_POINTS + 1)
    pts = track.point_at(ahead)
    yaw = state[2]
    cos_y, sin_y = np.cos(yaw), np.sin(yaw)
    rel = pts - state[:2]
    local = np.stack(
        [cos_y * rel[:, 0] + sin_y * rel[:, 1], -sin_y * rel[:, 0] + cos_y * rel[:, 1]],
        axis=1,
    )
    return Context(values=local.ravel(), valid=np.ones(2 * CONTEXT_POINTS, dtype=bool))


def stadium_track(
    straight: float = 30.0,
    radius: float = 8.0,
    half_width: float = 2.0,
    max_steps: int = 500,
    points_per_arc: int = 24,
    obstacles: tuple[Obstacle, ...] = (),
) -> Track:
    """Stadium oval: two straights joined by semicircles, start on the lower straight."""
    half = straight / 2.0
    bottom_x = np.linspace(-half, half, max(int(straight), 2), endpoint=False)
    bottom = np.stack([bottom_x, -radius * np.ones_like(bottom_x)], axis=1)
    angles_r = np.linspace(-np.pi / 2, np.pi / 2, points_per_arc, endpoint=False)
    right = np.stack([half + radius * np.cos(angles_r), radius * np.sin(angles_r)], axis=1)
    top_x = np.linspace(half, -half, max(int(straight), 2), endpoint=False)
    top = np.stack([top_x, radius * np.ones_like(top_x)], axis=1)
    angles_l = np.linspace(np.pi / 2, 3 * np.pi / 2, points_per_arc, endpoint=False)
    left = np.stack([-half + radius * np.cos(angles_l), radius * np.sin(angles_l)], axis=1)
    centerline = np.concatenate([bottom, right, top, left])
    start = np.array([-half, -radius, 0.0, 0.0])
    return Track(
        centerline=centerline,
        half_width=half_width,
        start_pose=start,
        max_steps=max_steps,
        obstacles=obstacles,
    )


class RacingEnv:
    """Closed-loop racing episode; a lap is complete once the accumulated
    signed arclength progress covers the full track length."""

    env_id = 1
    state_dim = 4
    control_dim = 2
    control_low = CONTROL_LOW
    control_high = CONTROL_HIGH

    def __init__(self, track: Track, params: VehicleParams | None = None, dt: float = 0.1):
        self.track = track
        self.params = params or VehicleParams()
        self._dt = dt
        self.state = track.start_pose.copy()
        self.steps = 0
        self.progress = 0.0
        _, self._last_s, _ = track_frame(self.state[None, :2], track)
        self._last_s = float(self._last_s[0])
        self.obstacles = track.obstacles
        self._centers, self._radii = obstacle_arrays(track.obstacles)
        self._dynamic = any(np.any(o.velocity != 0.0) for o in track.obstacles)

    @property
    def dt(self) -> float:
        return self._dt

    @property
    def max_steps(self) -> int:
        return self.track.max_steps

    def step(self, states: np.ndarray, controls: np.ndarray) -> np.ndarray:
        return bicycle_step(states, controls, self.params, self._dt)

    def running_cost(self, states: np.ndarray, prev_controls: np.ndarray | None = None) -> np.ndarray:
        cost = racing_running_cost(states, prev_controls, self.track, self.params)
        # Obstacles share the boundary penalty so rollouts steer around them.
        blocked = hits_obstacle(states[:, :2], self._centers, self._radii)
        return cost + BOUNDARY_PENALTY * blocked

    def terminal_cost(self, states: np.ndarray) -> np.ndarray:
        return np.zeros(states.shape[0])

    def context(self) -> Context:
        return racing_context(self.track, self.state)

    def advance(self, control: np.ndarray) -> np.ndarray:
        self.state = bicycle_step(self.state[None, :], control[None, :], self.params, self._dt)[0]
        if self._dynamic:
            self.obstacles = advance_obstacles(self.obstacles, self.track.bounding_box(1.0), self._dt)
            self._centers, self._radii = obstacle_arrays(self.obstacles)
        _, s, _ = track_frame(self.state[None, :2], self.track)
        s = float(s[0])
        length = self.track.total_length
        delta = s - self._last_s
        delta -= length * np.round(delta / length)  # unwrap across the start line
        self.progress += delta
        self._last_s = s
        self.steps += 1
        return self.state

    def status(self) -> Termination:
        if self.progress >= self.track.total_length:
            return Termination.GOAL_REACHED
        d, _, off = track_frame(self.state[None, :2], self.track)
        hit = hits_obstacle(self.state[None, :2], self._centers, self._radii)[0]
        if off[0] or hit:
            return Termination.COLLIDED
        if self.steps >= self.track.max_steps:
            return Termination.STEP_LIMIT
        return Termination.RUNNING


def place_track_obstacles(
    track: Track,
    seed: int,
    count: int,
    radius: float = 0.8,
    num_dynamic: int = 0,
    speed_range: tuple[float, float] = (0.1, 0.5),
    min_spacing: float = 6.0,
    start_clear: float = 10.0,
) -> tuple[Obstacle, ...]:
    """Scatter obstacles along the lane, offset from center so a gap remains."""
    rng = SeededRng(seed, 0x0B5).generator
    length = track.total_length
    start_clear = min(start_clear, 0.15 * length)
    usable = length - 2.0 * start_clear
    if usable <= 0 or count < 0:
        raise ValueError("track too short for any obstacle placement")
    # One obstacle per arclength stratum keeps any count feasible on any track
    # while the jitter inside each stratum stays seed-dependent.
    stride = usable / max(1, count)
    jitter = max(0.0, stride - min(min_spacing, stride)) / 2.0
    positions = [
        start_clear + (i + 0.5) * stride + rng.uniform(-jitter, jitter) for i in range(count)
    ]
    obstacles = []
    for i, s in enumerate(sorted(positions)):
        side = 1.0 if rng.uniform(0.0, 1.0) < 0.5 else -1.0
        offset = side * rng.uniform(radius + 0.2, track.half_width - 0.2)
        center_pt = track.point_at(np.array([s]))[0]
        nxt = track.point_at(np.array([s + 0.5]))[0]
        direction = nxt - center_pt
        direction /= np.linalg.norm(direction)
        normal = np.array([-direction[1], direction[0]])
        velocity = np.zeros(2)
        if i < num_dynamic:
            speed = rng.uniform(*speed_range)
            angle = rng.uniform(-np.pi, np.pi)
            velocity = speed * np.array([np.cos(angle), np.sin(angle)])
        obstacles.append(
            Obstacle(center=center_pt + offset * normal, radius=radius, velocity=velocity)
        )
    return tuple(obstacles)


def make_racing_env(
    seed: int,
    straight: float = 30.0,
    radius: float = 8.0,
    half_width: float = 2.0,
    num_obstacles: int = 0,
    obstacle_radius: float = 0.8,
    num_dynamic: int = 0,
    speed_range: tuple[float, float] = (0.1, 0.5),
    max_steps: int = 500,
    dt: float = 0.1,
) -> RacingEnv:
    track = stadium_track(
        straight=straight, radius=radius, half_width=half_width, max_steps=max_steps
    )
    if num_obstacles > 0:
        obstacles = place_track_obstacles(
            track,
            seed,
            num_obstacles,
            radius=obstacle_radius,
            num_dynamic=num_dynamic,
            speed_range=speed_range,
        )
        track = replace(track, obstacles=obstacles)
    return RacingEnv(track, dt=dt)
