"""Deterministic randomness and small shared numeric helpers.

Every random draw in the package comes from a :class:`SeededRng`, a
counter-based generator keyed by ``(seed, stream)``.  Identical keys produce
identical draw sequences on every run and under any thread schedule, which is
what makes parallel rollouts and whole experiment sweeps bit-reproducible.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

_MASK64 = (1 << 64) - 1


class InvalidCovarianceError(ValueError):
    """Raised when a diagonal covariance has nonpositive or non-finite entries."""


def _mix64(z: int) -> int:
    # splitmix64 finaliser; stable across platforms.
    z = (z + 0x9E3779B97F4A7C15) & _MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return (z ^ (z >> 31)) & _MASK64


@dataclass(frozen=True)
class DiagonalCovariance:
    """Per-channel noise variances (squared control units)."""

    variances: np.ndarray

    def __post_init__(self) -> None:
        v = np.asarray(self.variances, dtype=np.float64)
        object.__setattr__(self, "variances", v)
        if v.ndim != 1 or v.size == 0:
            raise InvalidCovarianceError("variances must be a non-empty 1-D vector")
        if not np.all(np.isfinite(v)) or np.any(v <= 0.0):
            raise InvalidCovarianceError(
                f"variances must be finite and strictly positive, got {v!r}"
            )

    @property
    def std(self) -> np.ndarray:
        return np.sqrt(self.variances)


@dataclass(frozen=True)
class SeededRng:
    """Counter-based generator keyed by ``(seed, stream)``.

    ``derive(*indices)`` produces an independent child stream by hashing the
    indices into the stream id, so e.g. sample ``k`` of solver iteration ``t``
    can use ``rng.derive(t, k)`` and stay reproducible no matter which worker
    executes it.
    """

    seed: int
    stream: int = 0
    _gen: np.random.Generator = field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        if not (0 <= self.seed <= _MASK64) or not (0 <= self.stream <= _MASK64):
            raise ValueError("seed and stream must be unsigned 64-bit integers")
        bitgen = np.random.Philox(key=[self.seed, self.stream])
        object.__setattr__(self, "_gen", np.random.Generator(bitgen))

    def derive(self, *indices: int) -> "SeededRng":
        stream = self.stream
        for ix in indices:
            stream = _mix64(stream ^ _mix64(ix & _MASK64))
        return SeededRng(self.seed, stream)

    @property
    def generator(self) -> np.random.Generator:
        return self._gen

    def normal(self, size) -> np.ndarray:
        return self._gen.standard_normal(size)

    def uniform(self, low: float, high: float, size=None) -> np.ndarray:
        return self._gen.uniform(low, high, size)

    def integers(self, low: int, high: int, size=None):
        return self._gen.integers(low, high, size)

    def permutation(self, n: int) -> np.ndarray:
        return self._gen.permutation(n)


def sample_gaussian(rng: SeededRng, mean: np.ndarray, cov: DiagonalCovariance) -> np.ndarray:
    """One draw from N(mean, diag(cov)); the caller decides about clamping."""
    mean = np.asarray(mean, dtype=np.float64)
    if mean.shape != cov.variances.shape:
        raise ValueError(f"mean shape {mean.shape} != covariance shape {cov.variances.shape}")
    return mean + rng.normal(mean.shape) * cov.std


def wrap_angle(a):
    """Wrap an angle (scalar or array, radians) into (-pi, pi]."""
    a = np.asarray(a, dtype=np.float64)
    if not np.all(np.isfinite(a)):
        raise ValueError("wrap_angle requires finite input")
    wrapped = _wrap_quiet(a)
    return float(wrapped) if wrapped.ndim == 0 else wrapped


def _wrap_quiet(a: np.ndarray) -> np.ndarray:
    # (-pi, pi] without finiteness checks; NaN propagates silently so the
    # rollout infeasibility sentinel can take over.
    return np.pi - np.mod(np.pi - a, 2.0 * np.pi)
