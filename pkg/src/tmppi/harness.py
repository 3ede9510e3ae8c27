"""Experiment driver: closed-loop episodes, data collection and metric sweeps.

Every episode is a pure function of its configuration and seed, so sweeps can
fan episodes out over worker processes and still produce byte-identical CSVs
for any worker count.  Controllers are compared on paired seeds: the same
episode index gets the same world and the same noise streams under both.
"""

from __future__ import annotations

import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import mppi
from .dataset import Dataset, EpisodeLog, Normalizer
from .envs import Termination, make_navigation_env, make_racing_env
from .rng import DiagonalCovariance, SeededRng
from .transformer import load_model, predict_autoregressive
from .transformer.model import TransformerConfig

BASELINE = "mppi"
WARM_START = "transformer-mppi"

NAV_DEFAULTS = dict(
    horizon=20, temperature=0.02, noise_std=(0.5, 0.5), max_steps=150,
    num_obstacles=15, obstacle_radius=1.0,
)
RACING_DEFAULTS = dict(
    horizon=25, temperature=0.2, noise_std=(0.5, 0.10), max_steps=400,
    num_obstacles=4, obstacle_radius=0.8, track_straight=10.0, track_radius=8.0,
    track_half_width=2.0, samples=(1024,),
)
RACING_FULL_SCALE = dict(
    track_straight=30.0, max_steps=500, num_obstacles=50,
    samples=(5000, 6000, 7000, 8000, 9000, 10000),
)


@dataclass(frozen=True)
class ExperimentConfig:
    environment: str = "navigation"          # navigation | racing
    controllers: tuple[str, ...] = (BASELINE, WARM_START)
    samples: tuple[int, ...] = (50, 100, 200, 300, 400, 500)
    episodes: int = 10
    seed: int = 0
    model_path: str | None = None
    threads: int = 1
    # solver
    horizon: int = 20
    temperature: float = 0.02
    noise_std: tuple[float, float] = (0.5, 0.5)
    sg_window: int = 5
    sg_order: int = 3
    weight_correction: str = "paper"
    # world
    num_obstacles: int = 15
    obstacle_radius: float = 1.0
    dynamic_obstacles: int = 0
    obstacle_speed: tuple[float, float] = (0.1, 0.5)
    max_steps: int = 150
    dt: float = 0.1
    # racing geometry
    track_straight: float = 10.0
    track_radius: float = 8.0
    track_half_width: float = 2.0

    def __post_init__(self) -> None:
        if self.environment not in ("navigation", "racing"):
            raise ValueError(f"unknown environment {self.environment!r}")
        for controller in self.controllers:
            if controller not in (BASELINE, WARM_START):
                raise ValueError(f"unknown controller {controller!r}")
        if self.episodes < 1:
            raise ValueError("episodes must be >= 1")
        if any(s < 1 for s in self.samples):
            raise ValueError("sample counts must be positive")

    @staticmethod
    def for_environment(environment: str, **overrides) -> "ExperimentConfig":
        defaults = NAV_DEFAULTS if environment == "navigation" else RACING_DEFAULTS
        merged = {**defaults, **overrides}
        return ExperimentConfig(environment=environment, **merged)


@dataclass(frozen=True)
class EpisodeMetrics:
    controller: str
    samples: int
    episode: int
    seed: int
    total_cost: float
    steps: int
    outcome: Termination
    step_ms: float

    @property
    def success(self) -> bool:
        return self.outcome == Termination.GOAL_REACHED


def make_env(cfg: ExperimentConfig, seed: int):
    if cfg.environment == "navigation":
        return make_navigation_env(
            seed=seed,
            num_obstacles=cfg.num_obstacles,
            obstacle_radius=cfg.obstacle_radius,
            num_dynamic=cfg.dynamic_obstacles,
            speed_range=cfg.obstacle_speed,
            max_steps=cfg.max_steps,
            dt=cfg.dt,
        )
    return make_racing_env(
        seed=seed,
        straight=cfg.track_straight,
        radius=cfg.track_radius,
        half_width=cfg.track_half_width,
        num_obstacles=cfg.num_obstacles,
        obstacle_radius=cfg.obstacle_radius,
        num_dynamic=cfg.dynamic_obstacles,
        speed_range=cfg.obstacle_speed,
        max_steps=cfg.max_steps,
        dt=cfg.dt,
    )


def solver_config(cfg: ExperimentConfig, env, num_samples: int) -> mppi.MppiConfig:
    return mppi.MppiConfig(
        num_samples=num_samples,
        horizon=cfg.horizon,
        temperature=cfg.temperature,
        noise_cov=DiagonalCovariance(np.asarray(cfg.noise_std, dtype=np.float64) ** 2),
        control_low=env.control_low,
        control_high=env.control_high,
        sg_window=cfg.sg_window,
        sg_order=cfg.sg_order,
        weight_correction=cfg.weight_correction,
    )


class WarmStartModel:
    """Loaded weights plus the normalisation needed around them."""

    def __init__(self, cfg: TransformerConfig, params, normalizer: Normalizer):
        self.cfg = cfg
        self.params = params
        self.normalizer = normalizer

    @staticmethod
    def load(path: str | Path) -> "WarmStartModel":
        cfg, params, extras = load_model(path)
        return WarmStartModel(cfg, params, Normalizer.from_arrays(extras))

    def predict_mean(self, past_states: np.ndarray, context: np.ndarray) -> np.ndarray:
        """(k, n) raw past states + (p,) raw context -> (H, m) physical controls."""
        states = self.normalizer.states.apply(past_states)
        ctx = self.normalizer.contexts.apply(context)
        normalised = predict_autoregressive(states, ctx, self.params, self.cfg)
        return self.normalizer.controls.invert(normalised)


_MODEL_CACHE: dict[tuple[str, int], WarmStartModel] = {}


def _cached_model(path: str) -> WarmStartModel:
    key = (str(path), os.stat(path).st_mtime_ns)
    model = _MODEL_CACHE.get(key)
    if model is None:
        model = WarmStartModel.load(path)
        _MODEL_CACHE.clear()
        _MODEL_CACHE[key] = model
    return model


def _check_model_compatible(model: WarmStartModel, env, cfg: ExperimentConfig) -> None:
    tc = model.cfg
    problems = []
    if tc.state_dim != env.state_dim:
        problems.append(f"state_dim {tc.state_dim} != {env.state_dim}")
    if tc.control_dim != env.control_dim:
        problems.append(f"control_dim {tc.control_dim} != {env.control_dim}")
    if tc.context_dim != env.context().values.shape[0]:
        problems.append(f"context_dim {tc.context_dim} != {env.context().values.shape[0]}")
    if tc.horizon != cfg.horizon:
        problems.append(f"horizon {tc.horizon} != {cfg.horizon}")
    if problems:
        raise ValueError("model/environment mismatch: " + "; ".join(problems))


def run_episode(
    cfg: ExperimentConfig,
    seed: int,
    num_samples: int,
    controller: str = BASELINE,
    model: WarmStartModel | None = None,
    record: bool = False,
) -> tuple[EpisodeMetrics, EpisodeLog | None]:
    """One closed-loop episode.  The warm-start controller re-predicts the
    solver mean from the recent states and context at every control step; the
    baseline shifts its previous solution."""
    env = make_env(cfg, seed)
    if controller == WARM_START:
        if model is None:
            if cfg.model_path is None:
                raise ValueError("transformer-mppi requires a model path")
            model = _cached_model(cfg.model_path)
        _check_model_compatible(model, env, cfg)

    solve_cfg = solver_config(cfg, env, num_samples)
    rng = SeededRng(seed)
    m = env.control_dim
    mean = np.zeros((cfg.horizon, m))
    u_prev = np.zeros(m)
    past: list[np.ndarray] = [env.state.copy()]
    states, controls, costs, contexts = [], [], [], []
    total_cost = 0.0
    solve_seconds = 0.0
    outcome = Termination.STEP_LIMIT

    for step in range(env.max_steps):
        context = env.context()
        if controller == WARM_START:
            k = model.cfg.k_past
            window = past[-k:]
            if len(window) < k:
                window = [window[0]] * (k - len(window)) + window
            mean_init = np.clip(
                model.predict_mean(np.stack(window), context.values),
                solve_cfg.control_low,
                solve_cfg.control_high,
            )
        else:
            mean_init = mean

        started = time.perf_counter()
        solution = mppi.mppi_step(env, env.state, mean_init, solve_cfg, rng.derive(step), u_prev=u_prev)
        solve_seconds += time.perf_counter() - started

        state_now = env.state.copy()
        step_cost = float(env.running_cost(state_now[None], u_prev[None])[0])
        total_cost += step_cost
        if record:
            states.append(state_now)
            controls.append(solution.applied_control.copy())
            costs.append(step_cost)
            contexts.append(context.values.copy())

        env.advance(solution.applied_control)
        past.append(env.state.copy())
        u_prev = solution.applied_control
        mean = solution.mean_next
        status = env.status()
        if status != Termination.RUNNING:
            outcome = status
            break

    steps = env.steps
    metrics = EpisodeMetrics(
        controller=controller,
        samples=num_samples,
        episode=0,
        seed=seed,
        total_cost=total_cost,
        steps=steps,
        outcome=outcome,
        step_ms=1000.0 * solve_seconds / max(steps, 1),
    )
    log = None
    if record:
        log = EpisodeLog(
            env_id=env.env_id,
            seed=seed,
            states=np.stack(states),
            controls=np.stack(controls),
            costs=np.asarray(costs),
            contexts=np.stack(contexts),
            outcome=outcome,
        )
    return metrics, log


def collect_episodes(
    cfg: ExperimentConfig,
    num_episodes: int,
    num_samples: int = 256,
    include_failed: bool = False,
    max_attempts_factor: int = 3,
    progress=None,
) -> tuple[Dataset, dict[str, int]]:
    """Run the baseline until ``num_episodes`` successful episodes are logged
    (over distinct world seeds); failures are counted and normally dropped."""
    dataset = Dataset(
        env_id=0 if cfg.environment == "navigation" else 1,
        k_past=5,
        horizon=cfg.horizon,
    )
    stats = {"goal_reached": 0, "collided": 0, "step_limit": 0, "generation_failed": 0}
    attempt, budget = 0, max_attempts_factor * num_episodes
    while len(dataset.episodes) < num_episodes and attempt < budget:
        seed = cfg.seed + attempt
        attempt += 1
        try:
            _, log = run_episode(cfg, seed, num_samples, BASELINE, record=True)
        except RuntimeError:
            stats["generation_failed"] += 1
            continue
        assert log is not None
        stats[log.outcome.value] = stats.get(log.outcome.value, 0) + 1
        if log.outcome == Termination.GOAL_REACHED or include_failed:
            dataset.episodes.append(log)
        if progress is not None:
            progress(len(dataset.episodes), attempt)
    return dataset, stats


# One job per episode; module-level so ProcessPoolExecutor can pickle it.
def _episode_job(args) -> EpisodeMetrics:
    cfg, controller, num_samples, episode_index = args
    metrics, _ = run_episode(cfg, cfg.seed + episode_index, num_samples, controller)
    return replace(metrics, episode=episode_index)


@dataclass
class SweepResult:
    cells: list[dict] = field(default_factory=list)
    episodes: list[EpisodeMetrics] = field(default_factory=list)


def sweep(cfg: ExperimentConfig, progress=None) -> SweepResult:
    """Grid over (controller, sample count); per-episode seeds are
    cfg.seed + episode so controllers face identical worlds and noise."""
    jobs = []
    for controller in cfg.controllers:
        for num_samples in cfg.samples:
            for episode in range(cfg.episodes):
                jobs.append((cfg, controller, num_samples, episode))

    if cfg.threads > 1:
        workers = min(cfg.threads, os.cpu_count() or 1, len(jobs))
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_episode_job, jobs, chunksize=1))
    else:
        results = []
        for job in jobs:
            results.append(_episode_job(job))
            if progress is not None:
                progress(len(results), len(jobs), results[-1])

    result = SweepResult(episodes=results)
    for controller in cfg.controllers:
        for num_samples in cfg.samples:
            cell = [
                r for r in results if r.controller == controller and r.samples == num_samples
            ]
            good = [r for r in cell if r.success]
            result.cells.append(
                {
                    "controller": controller,
                    "samples": num_samples,
                    "n_success": len(good),
                    "mean_cost": float(np.mean([r.total_cost for r in good])) if good else float("nan"),
                    "median_cost": float(np.median([r.total_cost for r in good])) if good else float("nan"),
                    "mean_steps": float(np.mean([r.steps for r in good])) if good else float("nan"),
                    "mean_step_ms": float(np.mean([r.step_ms for r in cell])),
                }
            )
    return result


def _fmt(value) -> str:
    if isinstance(value, float):
        return f"{value:.6g}"
    return str(value)


AGGREGATE_COLUMNS = ("controller", "samples", "n_success", "mean_cost", "median_cost", "mean_steps", "mean_step_ms")
EPISODE_COLUMNS = ("controller", "samples", "episode", "seed", "cost", "steps", "outcome")


def write_sweep_csvs(
    result: SweepResult, out_dir: str | Path, timing_in_csv: bool = False
) -> tuple[Path, Path]:
    """Write aggregate.csv and episodes.csv (plus a timings.csv sidecar).

    Wall-clock step times go to the sidecar; the mean_step_ms column in
    aggregate.csv holds nan unless ``timing_in_csv`` is set, so that a rerun
    with the same config and seed is byte-identical by default.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    cells = sorted((dict(c) for c in result.cells), key=lambda c: (c["controller"], c["samples"]))
    aggregate = out / "aggregate.csv"
    with open(aggregate, "w", encoding="utf-8") as fh:
        fh.write(",".join(AGGREGATE_COLUMNS) + "\n")
        for cell in cells:
            row = dict(cell)
            if not timing_in_csv:
                row["mean_step_ms"] = float("nan")
            fh.write(",".join(_fmt(row[col]) for col in AGGREGATE_COLUMNS) + "\n")
    with open(out / "timings.csv", "w", encoding="utf-8") as fh:
        fh.write("controller,samples,mean_step_ms\n")
        for cell in cells:
            fh.write(f"{cell['controller']},{cell['samples']},{cell['mean_step_ms']:.6g}\n")
    episodes = out / "episodes.csv"
    with open(episodes, "w", encoding="utf-8") as fh:
        fh.write(",".join(EPISODE_COLUMNS) + "\n")
        ordered = sorted(result.episodes, key=lambda r: (r.controller, r.samples, r.episode))
        for r in ordered:
            row = (r.controller, r.samples, r.episode, r.seed, r.total_cost, r.steps, r.outcome.value)
            fh.write(",".join(_fmt(v) for v in row) + "\n")
    return aggregate, episodes


def write_trajectory_csv(log: EpisodeLog, path: str | Path) -> Path:
    path = Path(path)
    n = log.states.shape[1]
    m = log.controls.shape[1]
    header = (
        ["t"] + [f"state_{i}" for i in range(n)] + [f"control_{i}" for i in range(m)] + ["cost"]
    )
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(",".join(header) + "\n")
        for t in range(log.length):
            cells = [str(t)]
            cells += [f"{v:.6g}" for v in log.states[t]]
            cells += [f"{v:.6g}" for v in log.controls[t]]
            cells.append(f"{log.costs[t]:.6g}")
            fh.write(",".join(cells) + "\n")
    return path
