"""Sampling-based MPC solver: one solve per control step.

Each solve perturbs a mean control sequence with K Gaussian noise
realisations, rolls the dynamics out over the horizon, scores every rollout,
converts scores to importance weights and pulls the mean toward the weighted
average of the perturbations.  The updated mean is smoothed per channel and
shifted one step for the next solve.  The mean fed in may come from the
previous iteration (baseline) or from a learned predictor (warm start).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .rng import DiagonalCovariance, SeededRng
from .sgolay import savgol_smooth


class AllInfeasibleError(RuntimeError):
    """Every sampled rollout produced a non-finite (infeasible) cost."""


@dataclass(frozen=True)
class MppiConfig:
    num_samples: int
    horizon: int
    temperature: float
    noise_cov: DiagonalCovariance
    control_low: np.ndarray
    control_high: np.ndarray
    sg_window: int = 5
    sg_order: int = 3
    # "paper" keeps the published exponent correction verbatim; "half" applies
    # 1/2 to the quadratic perturbed term as well; "off" drops the correction.
    # Kept switchable for sensitivity checks; all presets use "paper".
    weight_correction: str = "paper"

    def __post_init__(self) -> None:
        lo = np.asarray(self.control_low, dtype=np.float64)
        hi = np.asarray(self.control_high, dtype=np.float64)
        object.__setattr__(self, "control_low", lo)
        object.__setattr__(self, "control_high", hi)
        if self.num_samples < 1:
            raise ValueError("num_samples must be >= 1")
        if self.horizon < 1:
            raise ValueError("horizon must be >= 1")
        if not (self.temperature > 0.0):
            raise ValueError("temperature must be > 0")
        m = self.noise_cov.variances.shape[0]
        if lo.shape != (m,) or hi.shape != (m,):
            raise ValueError("control bounds must match the control dimension")
        if np.any(lo >= hi):
            raise ValueError("control_low must be elementwise below control_high")
        if self.sg_window % 2 == 0 or self.sg_order >= self.sg_window:
            raise ValueError("sg_window must be odd and greater than sg_order")
        if self.weight_correction not in ("paper", "half", "off"):
            raise ValueError(f"unknown weight_correction {self.weight_correction!r}")

    @property
    def control_dim(self) -> int:
        return self.noise_cov.variances.shape[0]


@dataclass
class SampleBatch:
    noise: np.ndarray       # (K, H, m), raw draws, never clamped
    perturbed: np.ndarray   # (K, H, m), mean + noise clamped to bounds
    costs: np.ndarray | None = None    # (K,)
    weights: np.ndarray | None = None  # (K,), sums to 1 once computed


@dataclass(frozen=True)
class MppiSolution:
    applied_control: np.ndarray   # (m,), first element of the smoothed mean
    mean_next: np.ndarray         # (H, m), smoothed and shifted
    min_cost: float
    mean_cost: float
    effective_samples: float
    batch: SampleBatch = field(repr=False)


def generate_samples(mean: np.ndarray, cfg: MppiConfig, rng: SeededRng) -> SampleBatch:
    """Draw K noise sequences around the mean; sample k uses stream rng.derive(k)."""
    mean = np.asarray(mean, dtype=np.float64)
    if mean.shape != (cfg.horizon, cfg.control_dim):
        raise ValueError(f"mean must have shape {(cfg.horizon, cfg.control_dim)}, got {mean.shape}")
    std = cfg.noise_cov.std
    noise = np.empty((cfg.num_samples, cfg.horizon, cfg.control_dim))
    for k in range(cfg.num_samples):
        noise[k] = rng.derive(k).normal((cfg.horizon, cfg.control_dim)) * std
    perturbed = np.clip(mean[None, :, :] + noise, cfg.control_low, cfg.control_high)
    return SampleBatch(noise=noise, perturbed=perturbed)


def rollout_cost(env, x0: np.ndarray, controls: np.ndarray, u_prev=None) -> float:
    """Cost of one control sequence from x0: terminal cost plus the running
    cost of each pre-step state.  Non-finite dynamics yield +inf."""
    controls = np.asarray(controls, dtype=np.float64)
    costs = _batch_rollout_costs(env, np.asarray(x0, dtype=np.float64), controls[None], u_prev)
    return float(costs[0])


def _batch_rollout_costs(env, x0: np.ndarray, controls: np.ndarray, u_prev=None) -> np.ndarray:
    """Vectorised rollout of (K, H, m) control sequences from a shared x0."""
    k, h, m = controls.shape
    states = np.broadcast_to(x0, (k, x0.shape[0])).copy()
    if u_prev is None:
        prev = np.zeros((k, m))
    else:
        prev = np.broadcast_to(np.asarray(u_prev, dtype=np.float64), (k, m)).copy()
    total = np.zeros(k)
    for i in range(h):
        total += env.running_cost(states, prev)
        states = env.step(states, controls[:, i, :])
        prev = controls[:, i, :]
    total += env.terminal_cost(states)
    return np.where(np.isfinite(total), total, np.inf)


def _exponent_correction(mean: np.ndarray, noise: np.ndarray, cfg: MppiConfig) -> np.ndarray:
    """Importance-sampling exponent term from the perturbed-vs-mean densities.

    Uses the sampling-time mean u and the raw (pre-clamp) perturbation
    w = u + eps.  The published form carries 1/2 only on the mean term.
    """
    if cfg.weight_correction == "off":
        return np.zeros(noise.shape[0])
    inv_var = 1.0 / cfg.noise_cov.variances
    w = mean[None, :, :] + noise
    u_term = 0.5 * np.sum(mean * mean * inv_var)
    w_coeff = 0.5 if cfg.weight_correction == "half" else 1.0
    w_term = w_coeff * np.einsum("khm,m->k", w * w, inv_var)
    return u_term - w_term


def compute_weights(
    costs: np.ndarray, mean: np.ndarray, noise: np.ndarray, cfg: MppiConfig
) -> np.ndarray:
    """Normalised importance weights exp(-J/lambda + q) / eta.

    Max-subtraction keeps the softmax finite for costs of any magnitude;
    +inf costs come out with weight exactly zero.
    """
    costs = np.asarray(costs, dtype=np.float64)
    mean = np.asarray(mean, dtype=np.float64)
    exponents = -costs / cfg.temperature + _exponent_correction(mean, noise, cfg)
    exponents = np.where(np.isposinf(costs), -np.inf, exponents)
    finite = np.isfinite(exponents)
    if not np.any(finite):
        raise AllInfeasibleError("all sampled rollouts are infeasible")
    shifted = exponents - np.max(exponents[finite])
    weights = np.exp(shifted)
    return weights / np.sum(weights)


def update_mean(
    mean: np.ndarray, noise: np.ndarray, weights: np.ndarray, cfg: MppiConfig
) -> np.ndarray:
    """Pull the mean toward the weighted noise average, then clamp to bounds."""
    updated = mean + np.einsum("k,khm->hm", weights, noise)
    return np.clip(updated, cfg.control_low, cfg.control_high)


def shift_mean(mean: np.ndarray) -> np.ndarray:
    """Receding-horizon warm start: drop the applied step, repeat the last."""
    return np.concatenate([mean[1:], mean[-1:]], axis=0)


def mppi_step(
    env, x: np.ndarray, mean_init: np.ndarray, cfg: MppiConfig, rng: SeededRng, u_prev=None
) -> MppiSolution:
    """One full solve: sample, roll out, weight, update, smooth, shift."""
    mean_init = np.asarray(mean_init, dtype=np.float64)
    batch = generate_samples(mean_init, cfg, rng)
    batch.costs = _batch_rollout_costs(env, np.asarray(x, dtype=np.float64), batch.perturbed, u_prev)
    batch.weights = compute_weights(batch.costs, mean_init, batch.noise, cfg)
    updated = update_mean(mean_init, batch.noise, batch.weights, cfg)
    smoothed = savgol_smooth(updated, cfg.sg_window, cfg.sg_order)
    # The filter can push values past the bounds; the applied control may not.
    smoothed = np.clip(smoothed, cfg.control_low, cfg.control_high)
    finite = batch.costs[np.isfinite(batch.costs)]
    return MppiSolution(
        applied_control=smoothed[0].copy(),
        mean_next=shift_mean(smoothed),
        min_cost=float(np.min(finite)),
        mean_cost=float(np.mean(finite)),
        effective_samples=float(1.0 / np.sum(batch.weights**2)),
        batch=batch,
    )
