"""Timestep ladder and rolling-queue containers.

The ladder is the ordered sequence tau_0 < tau_1 < ... < tau_T with signal
coefficients alpha_bar(tau) that decrease strictly from 1.  Latents are held
in a LatentQueue whose timesteps are non-decreasing from head to tail; in
zigzag mode the level changes only at group boundaries of width L_zig and
adjacent distinct levels differ by exactly one ladder step.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import IndexErrorLqe, ParameterError, SizeError, StateError

# Terminal signal fraction above which a schedule's last level is not
# noise-dominated.  Violations warn instead of raising: short ladders with
# conventional betas (e.g. T=64, beta in [1e-4, 2e-2]) exceed it on purpose.
NOISE_DOMINATED_ALPHA_BAR = 0.05


@dataclass(frozen=True)
class NoiseSchedule:
    """Ordered ladder tau_0..tau_T with per-level signal coefficients."""

    taus: np.ndarray        # int labels, strictly increasing, taus[0] = 0
    alpha_bar: np.ndarray   # float64, strictly decreasing, alpha_bar[0] = 1

    def __post_init__(self):
        taus = np.asarray(self.taus, dtype=np.int64)
        ab = np.asarray(self.alpha_bar, dtype=np.float64)
        object.__setattr__(self, "taus", taus)
        object.__setattr__(self, "alpha_bar", ab)
        if taus.ndim != 1 or taus.size < 2:
            raise ParameterError("schedule needs at least two levels")
        if ab.shape != taus.shape:
            raise ParameterError("taus and alpha_bar must align")
        if np.any(np.diff(taus) <= 0):
            raise ParameterError("taus must be strictly increasing")
        if ab[0] != 1.0:
            raise ParameterError("alpha_bar at tau_0 must be 1")
        if np.any(np.diff(ab) >= 0) or ab[-1] <= 0:
            raise ParameterError("alpha_bar must be strictly decreasing in (0, 1]")
        if ab[-1] >= NOISE_DOMINATED_ALPHA_BAR:
            warnings.warn(
                f"terminal alpha_bar {ab[-1]:.4f} >= {NOISE_DOMINATED_ALPHA_BAR}; "
                "terminal latents are not noise-dominated",
                stacklevel=3,
            )

    @property
    def T(self) -> int:
        return int(self.taus.size - 1)

    def alpha_bar_at(self, level: int) -> float:
        """Signal coefficient at ladder position `level` (0..T)."""
        if not 0 <= level <= self.T:
            raise IndexErrorLqe(f"level {level} outside ladder 0..{self.T}")
        return float(self.alpha_bar[level])


def build_schedule(T: int, beta_min: float = 1e-4, beta_max: float = 2e-2) -> NoiseSchedule:
    """Linear-beta ladder: alpha_bar(tau_t) = prod_{s<=t} (1 - beta_s).

    betas are linearly spaced over [beta_min, beta_max] for s = 1..T; the
    ladder labels are simply 0..T.
    """
    if T < 2:
        raise ParameterError(f"T must be >= 2, got {T}")
    if not (0.0 < beta_min < beta_max < 1.0):
        raise ParameterError(f"need 0 < beta_min < beta_max < 1, got {beta_min}, {beta_max}")
    betas = np.linspace(beta_min, beta_max, T, dtype=np.float64)
    alpha_bar = np.concatenate([[1.0], np.cumprod(1.0 - betas)])
    return NoiseSchedule(taus=np.arange(T + 1), alpha_bar=alpha_bar)


@dataclass
class FrameLatent:
    """One frame's latent array plus its position and current noise level.

    `level` is the ladder position (index into the schedule), not the raw
    tau label; the two coincide for ladders built here.
    """

    data: np.ndarray     # float32, shape (l, d)
    frame_index: int     # global frame position, 1-based
    level: int           # current ladder position, 0..T

    def __post_init__(self):
        self.data = np.asarray(self.data, dtype=np.float32)
        if self.data.ndim != 2:
            raise ParameterError("latent data must be 2-d (tokens, channels)")
        if not np.all(np.isfinite(self.data)):
            raise ParameterError(f"non-finite latent data for frame {self.frame_index}")
        if self.frame_index < 1:
            raise ParameterError("frame_index is 1-based")

    def copy(self) -> "FrameLatent":
        return FrameLatent(self.data.copy(), self.frame_index, self.level)


@dataclass
class LatentQueue:
    """Rolling queue of frame latents, noisier toward the tail."""

    items: list[FrameLatent] = field(default_factory=list)
    group_width: int = 1     # L_zig; 1 = plain FIFO layout

    def __len__(self) -> int:
        return len(self.items)

    def levels(self) -> list[int]:
        return [it.level for it in self.items]

    def frame_indices(self) -> list[int]:
        return [it.frame_index for it in self.items]

    def enqueue(self, item: FrameLatent) -> None:
        self.items.append(item)

    def dequeue(self, n: int = 1) -> list[FrameLatent]:
        if n > len(self.items):
            raise SizeError(f"cannot dequeue {n} of {len(self.items)}")
        head, self.items = self.items[:n], self.items[n:]
        return head

    def check_invariants(self) -> None:
        """Assert timestep monotonicity and the zigzag group layout.

        Called after every engine mutation in debug mode (see engine code);
        cheap enough to leave on in tests unconditionally.
        """
        lv = self.levels()
        if any(b < a for a, b in zip(lv, lv[1:])):
            raise StateError("queue timesteps must be non-decreasing head to tail")
        w = self.group_width
        if w > 1:
            for i, (a, b) in enumerate(zip(lv, lv[1:])):
                if a != b:
                    if (i + 1) % w != 0:
                        raise StateError(
                            f"level change at position {i + 1} not on a group boundary"
                        )
                    if b - a != 1:
                        raise StateError(
                            f"adjacent groups differ by {b - a} levels, expected 1"
                        )
        elif w == 1 and len(set(lv)) not in (0, len(lv)):
            # FIFO layout: every position at a distinct level, unless the
            # queue is a uniform-level stage-2 buffer (all equal).
            if len(set(lv)) != 1:
                raise StateError("FIFO queue must hold pairwise distinct levels")


def queue_noise_span(queue: LatentQueue, start: int, width: int) -> int:
    """Max minus min ladder level inside the window [start, start+width).

    `start` is 0-based here; the 1-based convention of the written procedures
    is converted at the API boundary by callers.
    """
    if width < 1 or start < 0 or start + width > len(queue):
        raise IndexErrorLqe(
            f"window [{start}, {start + width}) outside queue of length {len(queue)}"
        )
    lv = [it.level for it in queue.items[start:start + width]]
    return max(lv) - min(lv)
