"""Noise-prediction contract and the analytic toy denoisers.

A denoiser is a pure callable mapping a window of frame latents (each with
its own level and global frame index) plus per-frame condition identifiers
to predicted-noise arrays of the same shapes.  The toy denoisers here invert
the forward process toward a known target sequence, which makes every
generation procedure exactly checkable.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Protocol, Sequence

import numpy as np

from . import rng
from .errors import IndexErrorLqe, ParameterError
from .schedule import FrameLatent, NoiseSchedule


class Denoiser(Protocol):
    """Callable contract: (window latents, per-frame conditions) -> eps arrays."""

    max_window: int

    def __call__(
        self, latents: Sequence[FrameLatent], conditions: Sequence[object]
    ) -> list[np.ndarray]: ...


@dataclass(frozen=True)
class TargetSequence:
    """The ground-truth frame latents a toy denoiser steers toward."""

    targets: np.ndarray               # (N, l, d) float32
    discontinuities: tuple = ()       # sorted frame indices in [2, N]

    def __post_init__(self):
        t = np.asarray(self.targets, dtype=np.float32)
        object.__setattr__(self, "targets", t)
        if t.ndim != 3 or t.shape[0] < 1:
            raise ParameterError("targets must be a non-empty (N, l, d) array")
        if not np.all(np.isfinite(t)):
            raise ParameterError("targets must be finite")
        disc = tuple(self.discontinuities)
        if list(disc) != sorted(disc) or any(not 2 <= j <= t.shape[0] for j in disc):
            raise ParameterError("discontinuities must be sorted and within [2, N]")
        object.__setattr__(self, "discontinuities", disc)

    def __len__(self) -> int:
        return int(self.targets.shape[0])

    def frame(self, frame_index: int) -> np.ndarray:
        """Target for a 1-based global frame index."""
        if not 1 <= frame_index <= len(self):
            raise IndexErrorLqe(
                f"frame_index {frame_index} beyond target sequence of {len(self)}"
            )
        return self.targets[frame_index - 1]


# Random-walk scale relative to the first frame's norm, and the jump size of
# an injected discontinuity in the same units.
WALK_SIGMA_FRACTION = 0.05
JUMP_MAGNITUDE_FRACTION = 3.0
# Token-coherent mean component of the first frame.  Without it, the
# token-pooled trajectory starts near the origin and small walk steps swing
# its direction wildly, drowning pooled-cosine scoring in natural valleys.
BASE_MEAN_MAGNITUDE = 2.0


def _coherent_direction(v: np.ndarray, l: int) -> np.ndarray:
    """Unit (l, d) array repeating the channel direction v at every token.

    Token-coherent structure survives mean-pooling over tokens, so jumps
    built from it stay visible to pooled-cosine scoring.
    """
    v = v.astype(np.float64)
    v /= np.linalg.norm(v)
    return np.tile(v / np.sqrt(l), (l, 1))


def make_target_walk(
    n_frames: int,
    l: int = 16,
    d: int = 8,
    seed: int = 0,
    discontinuities: Sequence[int] = (),
) -> TargetSequence:
    """Smooth latent random walk with optional injected jumps.

    x_{i+1} = x_i + sigma_walk * g with sigma_walk = 0.05 * ||x_1||; a
    discontinuity at frame j adds a jump of magnitude 3 * ||x_1|| along a
    fixed random token-coherent direction.  The first frame carries a
    token-coherent mean component on top of its Gaussian part.
    """
    if n_frames < 1:
        raise ParameterError("need at least one frame")
    frames = np.empty((n_frames, l, d), dtype=np.float32)
    w = _coherent_direction(rng.normal(seed, 1, "target-base", (d,)), l)
    frames[0] = rng.normal(seed, 1, "target-init", (l, d)) \
        + (BASE_MEAN_MAGNITUDE * np.sqrt(l) * w).astype(np.float32)
    base_norm = float(np.linalg.norm(frames[0]))
    sigma = WALK_SIGMA_FRACTION * base_norm
    disc = set(discontinuities)
    for i in range(2, n_frames + 1):
        step = sigma * rng.normal(seed, i, "target-step", (l, d))
        frames[i - 1] = frames[i - 2] + step
        if i in disc:
            u = _coherent_direction(rng.normal(seed, i, "target-jump", (d,)), l)
            frames[i - 1] += (JUMP_MAGNITUDE_FRACTION * base_norm * u).astype(np.float32)
    return TargetSequence(frames, tuple(sorted(disc)))


def _invert_forward(z: FrameLatent, target: np.ndarray, schedule: NoiseSchedule) -> np.ndarray:
    """eps_hat = (z - sqrt(a) * target) / sqrt(1 - a); zeros at the clean level."""
    if z.level == 0:
        return np.zeros_like(z.data)
    a = schedule.alpha_bar_at(z.level)
    eps = (z.data.astype(np.float64) - np.sqrt(a) * target.astype(np.float64)) / np.sqrt(1.0 - a)
    return eps.astype(np.float32)


@dataclass(frozen=True)
class PerfectTargetDenoiser:
    """Analytic inverse of the forward process toward a target sequence.

    One reverse chain down to the clean level recovers the target exactly,
    whatever the starting latent, so any correct scheduling of steps must
    reproduce the target sequence.
    """

    targets: TargetSequence
    schedule: NoiseSchedule
    max_window: int = 10**9

    def __call__(self, latents, conditions):
        return [
            _invert_forward(z, self.targets.frame(z.frame_index), self.schedule)
            for z in latents
        ]


@dataclass(frozen=True)
class DriftDenoiser:
    """Perfect-target denoiser with per-frame latent-space drift.

    Each frame independently drifts with probability `drift_prob` (decided
    once per (seed, frame_index)), steering toward target + scale * u for a
    fixed random unit direction u.  Models an upstream consistency anomaly
    for exercising self-reflection.
    """

    targets: TargetSequence
    schedule: NoiseSchedule
    drift_prob: float
    drift_scale: float
    seed: int = 0
    max_window: int = 10**9
    _cache: dict = field(default_factory=dict, compare=False, hash=False)

    def __post_init__(self):
        if not 0.0 <= self.drift_prob <= 1.0:
            raise ParameterError("drift_prob must be in [0, 1]")

    def is_drifted(self, frame_index: int) -> bool:
        return rng.uniform(self.seed, frame_index, "drift-coin") < self.drift_prob

    def drifted_target(self, frame_index: int) -> np.ndarray:
        if frame_index not in self._cache:
            base = self.targets.frame(frame_index)
            if self.is_drifted(frame_index):
                u = rng.normal(self.seed, frame_index, "drift-dir", base.shape).astype(np.float64)
                u /= np.linalg.norm(u)
                base = (base.astype(np.float64) + self.drift_scale * u).astype(np.float32)
            self._cache[frame_index] = base
        return self._cache[frame_index]

    def __call__(self, latents, conditions):
        return [
            _invert_forward(z, self.drifted_target(z.frame_index), self.schedule)
            for z in latents
        ]


def perfect_target_denoiser(targets: TargetSequence, schedule: NoiseSchedule) -> PerfectTargetDenoiser:
    return PerfectTargetDenoiser(targets, schedule)


def drift_denoiser(
    targets: TargetSequence,
    schedule: NoiseSchedule,
    drift_prob: float,
    drift_scale: float,
    seed: int = 0,
) -> DriftDenoiser:
    return DriftDenoiser(targets, schedule, drift_prob, drift_scale, seed)
