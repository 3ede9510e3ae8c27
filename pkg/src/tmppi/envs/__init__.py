from .base import Context, Obstacle, Termination, advance_obstacles
from .navigation import (
    NavWorld,
    NavigationEnv,
    make_navigation_env,
    nav_running_cost,
    unicycle_step,
)
from .racing import (
    RacingEnv,
    Track,
    VehicleParams,
    bicycle_step,
    make_racing_env,
    racing_running_cost,
    stadium_track,
    track_frame,
)

__all__ = [
    "Context",
    "Obstacle",
    "Termination",
    "advance_obstacles",
    "NavWorld",
    "NavigationEnv",
    "make_navigation_env",
    "nav_running_cost",
    "unicycle_step",
    "RacingEnv",
    "Track",
    "VehicleParams",
    "bicycle_step",
    "make_racing_env",
    "racing_running_cost",
    "stadium_track",
    "track_frame",
]
