"""Training data plumbing: episode logs, supervised windows, quantile
normalisation and a reproducible binary container.
"""

from __future__ import annotations

import struct
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .envs.base import Termination
from .rng import SeededRng

MAGIC = b"TMPD"
VERSION = 1


class DatasetFormatError(ValueError):
    """Corrupt, truncated or incompatible dataset file."""


@dataclass
class EpisodeLog:
    """One closed-loop episode: the states visited, controls applied, realised
    running costs and the context the controller saw at each step.

    The context is constant within an episode for navigation (obstacles are
    recorded at collection time and stay put); for racing it is the local lane
    geometry and changes with the car, so one row is kept per step.
    """

    env_id: int
    seed: int
    states: np.ndarray     # (T, n)
    controls: np.ndarray   # (T, m)
    costs: np.ndarray      # (T,)
    contexts: np.ndarray   # (T, p)
    outcome: Termination

    def __post_init__(self) -> None:
        t = self.states.shape[0]
        if not (self.controls.shape[0] == self.costs.shape[0] == self.contexts.shape[0] == t):
            raise ValueError("states, controls, costs and contexts must share their length")

    @property
    def length(self) -> int:
        return self.states.shape[0]


@dataclass(frozen=True)
class WindowSample:
    past_states: np.ndarray      # (k, n)
    context: np.ndarray          # (p,)
    future_controls: np.ndarray  # (H, m)
    episode_index: int
    t: int


def window(episode: EpisodeLog, k: int, horizon: int, episode_index: int = 0) -> list[WindowSample]:
    """All supervised pairs of one episode: k past states (left-padded by
    repeating the first state) and the next ``horizon`` controls."""
    if k < 1 or horizon < 1:
        raise ValueError("k and horizon must be >= 1")
    samples = []
    length = episode.length
    for t in range(length - horizon + 1):
        lo = max(0, t - k + 1)
        past = episode.states[lo : t + 1]
        if past.shape[0] < k:
            pad = np.repeat(episode.states[:1], k - past.shape[0], axis=0)
            past = np.concatenate([pad, past], axis=0)
        samples.append(
            WindowSample(
                past_states=past,
                context=episode.contexts[t],
                future_controls=episode.controls[t : t + horizon],
                episode_index=episode_index,
                t=t,
            )
        )
    return samples


@dataclass(frozen=True)
class QuantileTransform:
    """Monotone per-channel map through the empirical CDF onto [0, 1].

    Forward interpolates linearly between stored quantiles and clips outside
    the training range; the inverse interpolates the quantile function.
    Constant channels map everything to 0.5 and invert to the constant.
    """

    quantiles: np.ndarray   # (channels, n_q), each row nondecreasing
    grid: np.ndarray        # (n_q,) uniform in [0, 1]

    @property
    def num_channels(self) -> int:
        return self.quantiles.shape[0]

    def apply(self, values: np.ndarray) -> np.ndarray:
        values = np.asarray(values, dtype=np.float64)
        flat = values.reshape(-1, self.num_channels)
        out = np.empty_like(flat)
        for c in range(self.num_channels):
            q = self.quantiles[c]
            if q[0] == q[-1]:
                out[:, c] = 0.5
            else:
                out[:, c] = np.interp(flat[:, c], q, self.grid)
        return out.reshape(values.shape)

    def invert(self, values: np.ndarray) -> np.ndarray:
        values = np.asarray(values, dtype=np.float64)
        flat = values.reshape(-1, self.num_channels)
        out = np.empty_like(flat)
        for c in range(self.num_channels):
            q = self.quantiles[c]
            out[:, c] = q[0] if q[0] == q[-1] else np.interp(flat[:, c], self.grid, q)
        return out.reshape(values.shape)


def fit_quantile(data: np.ndarray, n_q: int = 1000) -> QuantileTransform:
    """Fit per-channel empirical quantiles on (N, channels) samples."""
    data = np.asarray(data, dtype=np.float64)
    if data.ndim != 2 or data.shape[0] < 2:
        raise ValueError("need a (N >= 2, channels) array to fit quantiles")
    if n_q < 2:
        raise ValueError("n_q must be >= 2")
    grid = np.linspace(0.0, 1.0, n_q)
    quantiles = np.quantile(data, grid, axis=0).T  # (channels, n_q)
    for c in range(quantiles.shape[0]):
        if quantiles[c, 0] == quantiles[c, -1]:
            warnings.warn(f"channel {c} is constant; quantile map degenerates to 0.5")
    return QuantileTransform(quantiles=quantiles, grid=grid)


@dataclass(frozen=True)
class Normalizer:
    """The three per-domain quantile transforms used around the model."""

    states: QuantileTransform
    controls: QuantileTransform
    contexts: QuantileTransform

    @staticmethod
    def fit(episodes: list[EpisodeLog], n_q: int = 1000) -> "Normalizer":
        all_states = np.concatenate([e.states for e in episodes])
        all_controls = np.concatenate([e.controls for e in episodes])
        all_contexts = np.concatenate([e.contexts for e in episodes])
        return Normalizer(
            states=fit_quantile(all_states, n_q),
            controls=fit_quantile(all_controls, n_q),
            contexts=fit_quantile(all_contexts, n_q),
        )

    def as_arrays(self) -> dict[str, np.ndarray]:
        return {
            "norm.states.quantiles": self.states.quantiles,
            "norm.controls.quantiles": self.controls.quantiles,
            "norm.contexts.quantiles": self.contexts.quantiles,
            "norm.grid": self.states.grid,
        }

    @staticmethod
    def from_arrays(arrays: dict[str, np.ndarray]) -> "Normalizer":
        grid = arrays["norm.grid"]
        return Normalizer(
            states=QuantileTransform(arrays["norm.states.quantiles"], grid),
            controls=QuantileTransform(arrays["norm.controls.quantiles"], grid),
            contexts=QuantileTransform(arrays["norm.contexts.quantiles"], grid),
        )


def split_episodes(
    episodes: list[EpisodeLog], ratio: float, seed: int
) -> tuple[list[EpisodeLog], list[EpisodeLog]]:
    """Deterministic shuffled split at episode granularity (no window of one
    episode can land on both sides)."""
    if not 0.0 < ratio < 1.0:
        raise ValueError("ratio must lie strictly between 0 and 1")
    if len(episodes) < 2:
        raise ValueError("need at least 2 episodes to split")
    order = SeededRng(seed, 0x5971).permutation(len(episodes))
    n_train = int(round(len(episodes) * ratio))
    n_train = min(max(n_train, 1), len(episodes) - 1)
    train_ix = set(order[:n_train].tolist())
    train = [e for i, e in enumerate(episodes) if i in train_ix]
    val = [e for i, e in enumerate(episodes) if i not in train_ix]
    return train, val


@dataclass
class Dataset:
    """A collected corpus plus the window geometry it was meant for."""

    env_id: int
    k_past: int
    horizon: int
    episodes: list[EpisodeLog] = field(default_factory=list)

    @property
    def state_dim(self) -> int:
        return self.episodes[0].states.shape[1] if self.episodes else 0

    @property
    def control_dim(self) -> int:
        return self.episodes[0].controls.shape[1] if self.episodes else 0

    @property
    def context_dim(self) -> int:
        return self.episodes[0].contexts.shape[1] if self.episodes else 0


_OUTCOME_CODES = {
    Termination.RUNNING: 0,
    Termination.GOAL_REACHED: 1,
    Termination.COLLIDED: 2,
    Termination.STEP_LIMIT: 3,
}
_OUTCOME_FROM_CODE = {v: k for k, v in _OUTCOME_CODES.items()}


def save_dataset(path: str | Path, dataset: Dataset) -> None:
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        n = dataset.state_dim
        m = dataset.control_dim
        p = dataset.context_dim
        fh.write(
            struct.pack(
                "<7i", VERSION, dataset.env_id, n, m, p, dataset.k_past, dataset.horizon
            )
        )
        fh.write(struct.pack("<i", len(dataset.episodes)))
        for ep in dataset.episodes:
            fh.write(struct.pack("<QiiB", ep.seed, ep.env_id, ep.length, _OUTCOME_CODES[ep.outcome]))
            for arr in (ep.states, ep.controls, ep.costs, ep.contexts):
                fh.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())


def load_dataset(path: str | Path) -> Dataset:
    raw = Path(path).read_bytes()
    view = memoryview(raw)
    if bytes(view[:4]) != MAGIC:
        raise DatasetFormatError(f"{path}: not a dataset file (bad magic)")
    offset = 4

    def take(fmt: str):
        nonlocal offset
        size = struct.calcsize(fmt)
        if offset + size > len(raw):
            raise DatasetFormatError(f"{path}: truncated header")
        values = struct.unpack_from(fmt, raw, offset)
        offset += size
        return values

    version, env_id, n, m, p, k_past, horizon = take("<7i")
    if version != VERSION:
        raise DatasetFormatError(f"{path}: unsupported version {version}")
    (count,) = take("<i")
    episodes = []
    for _ in range(count):
        seed, ep_env, length, outcome = take("<QiiB")

        def block(cols: int) -> np.ndarray:
            nonlocal offset
            size = 8 * length * cols
            if offset + size > len(raw):
                raise DatasetFormatError(f"{path}: truncated episode payload")
            arr = np.frombuffer(raw, dtype="<f8", count=length * cols, offset=offset)
            offset += size
            return arr.reshape(length, cols).astype(np.float64)

        states = block(n)
        controls = block(m)
        costs = block(1)[:, 0]
        contexts = block(p)
        episodes.append(
            EpisodeLog(
                env_id=ep_env, seed=seed, states=states, controls=controls,
                costs=costs, contexts=contexts, outcome=_OUTCOME_FROM_CODE[outcome],
            )
        )
    if offset != len(raw):
        raise DatasetFormatError(f"{path}: trailing bytes after the last episode")
    return Dataset(env_id=env_id, k_past=k_past, horizon=horizon, episodes=episodes)


def export_csv(dataset: Dataset, path: str | Path) -> None:
    """One row per step: episode, t, state..., control..., cost."""
    n, m = dataset.state_dim, dataset.control_dim
    header = (
        ["episode", "t"]
        + [f"state_{i}" for i in range(n)]
        + [f"control_{i}" for i in range(m)]
        + ["cost"]
    )
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(",".join(header) + "\n")
        for ix, ep in enumerate(dataset.episodes):
            for t in range(ep.length):
                cells = [str(ix), str(t)]
                cells += [f"{v:.6g}" for v in ep.states[t]]
                cells += [f"{v:.6g}" for v in ep.controls[t]]
                cells.append(f"{ep.costs[t]:.6g}")
                fh.write(",".join(cells) + "\n")


def windows_to_arrays(
    samples: list[WindowSample], normalizer: Normalizer
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Stack and normalise window samples into model-ready arrays."""
    states = np.stack([s.past_states for s in samples])
    contexts = np.stack([s.context for s in samples])
    controls = np.stack([s.future_controls for s in samples])
    return (
        normalizer.states.apply(states),
        normalizer.contexts.apply(contexts),
        normalizer.controls.apply(controls),
    )
