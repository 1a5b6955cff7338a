"""Latent-space consistency scoring and the self-reflection search.

The consistency score pools each frame latent over the token axis, L2
normalizes the pooled channel vectors, and averages the full eval x ref
cosine matrix.  A drop of more than delta_adju against the last accepted
score triggers an expanded search: n_samp candidate tail segments are
regenerated from fresh noise under frozen guidance latents, rescored, and
the best one replaces the incumbent tail if it scores strictly higher.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import rng
from .conditioning import PromptTrack
from .config import SchedulerConfig
from .denoisers import Denoiser
from .errors import DegenerateInputError, ParameterError, StateError, UndefinedSignal
from .sampler import SamplerState, add_noise
from .schedule import FrameLatent, LatentQueue, NoiseSchedule
from .trace import GenerationTrace
from .window import run_window_pass


@dataclass(frozen=True)
class ConsistencyWindows:
    """Chunk sizes and anchor positions for tail-side consistency checks."""

    f_eval: int
    f_ref: int
    f_judg: int
    f_guid: int

    def __post_init__(self):
        if not 1 <= self.f_eval <= self.f_ref:
            raise ParameterError("need f_ref >= f_eval >= 1")
        if self.f_judg - self.f_ref < 1:
            raise ParameterError("need f_judg - f_ref >= 1")
        if self.f_guid < self.f_ref:
            raise ParameterError("need f_guid >= f_ref")


@dataclass
class ReflectionState:
    """Last accepted score plus running counters (n_corr <= n_eval <= n_all)."""

    prev_score: float | None = None
    last_prompt_index: int | None = None
    n_all: int = 0
    n_eval: int = 0
    n_corr: int = 0

    def check(self) -> None:
        if not self.n_corr <= self.n_eval <= self.n_all:
            raise StateError(
                f"counter ordering violated: {self.n_corr} <= {self.n_eval} <= {self.n_all}"
            )


def _pool_normalize(q: np.ndarray) -> np.ndarray:
    """Mean over tokens, then L2-normalize each frame's channel vector."""
    pooled = q.astype(np.float64).mean(axis=1)          # (f, d)
    norms = np.linalg.norm(pooled, axis=1, keepdims=True)
    if np.any(norms == 0.0):
        raise DegenerateInputError("zero-norm pooled latent; cosine undefined")
    return pooled / norms


def c_score(q_eval: np.ndarray, q_ref: np.ndarray) -> float:
    """Grand mean of the eval x ref cosine matrix; in [-1, 1]."""
    q_eval = np.asarray(q_eval)
    q_ref = np.asarray(q_ref)
    if q_eval.ndim != 3 or q_ref.ndim != 3:
        raise ParameterError("expected (f, l, d) arrays")
    if q_eval.shape[0] < 1 or q_ref.shape[0] < 1:
        raise ParameterError("both chunks must be non-empty")
    if q_eval.shape[1:] != q_ref.shape[1:]:
        raise ParameterError("chunks must share (l, d)")
    pe = _pool_normalize(q_eval)
    pr = _pool_normalize(q_ref)
    return float((pe @ pr.T).mean())


def latents_c_score(q_eval: Sequence[FrameLatent], q_ref: Sequence[FrameLatent]) -> float:
    return c_score(
        np.stack([x.data for x in q_eval]),
        np.stack([x.data for x in q_ref]),
    )


def score_curve(frames: np.ndarray, f_eval: int = 4, f_ref: int = 8) -> list[tuple[int, float]]:
    """Sliding consistency evaluation over a frame sequence.

    Returns (position, score) pairs, one per eval-chunk start position j
    (1-based), where frames [j - f_ref, j - 1] are the reference and frames
    [j, j + f_eval - 1] are evaluated.
    """
    n = frames.shape[0]
    out = []
    for j in range(f_ref + 1, n - f_eval + 2):
        ref = frames[j - 1 - f_ref:j - 1]
        ev = frames[j - 1:j - 1 + f_eval]
        out.append((j, c_score(ev, ref)))
    return out


def noisy_score_correlation(
    targets: np.ndarray,
    levels: Sequence[int],
    sampler: SamplerState,
    seed: int = 0,
    f_eval: int = 4,
    f_ref: int = 8,
) -> dict[int, float]:
    """Pearson r between noisy-latent and clean-latent score curves per level."""
    n = targets.shape[0]
    if n < 20:
        raise ParameterError(f"need at least 20 frames, got {n}")
    clean = np.array([s for _, s in score_curve(targets, f_eval, f_ref)])
    out: dict[int, float] = {}
    for level in levels:
        if level == 0:
            noisy_curve = clean
        else:
            noised = np.stack([
                add_noise(
                    sampler,
                    FrameLatent(targets[i], i + 1, 0),
                    level,
                    rng.normal(seed, i + 1, f"corr-noise-{level}", targets[i].shape),
                ).data
                for i in range(n)
            ])
            noisy_curve = np.array([s for _, s in score_curve(noised, f_eval, f_ref)])
        out[level] = pearson(noisy_curve, clean)
    return out


def pearson(a: np.ndarray, b: np.ndarray) -> float:
    if a.std() == 0.0 or b.std() == 0.0:
        raise UndefinedSignal("constant score curve; correlation undefined")
    return float(np.corrcoef(a, b)[0, 1])


def should_trigger(state: ReflectionState, current: float, delta_adju: float) -> bool:
    """True iff the score dropped by more than delta_adju since last accepted.

    On the first observation the score only seeds the baseline.  On a
    non-trigger the baseline advances to `current`; on a trigger the baseline
    is left for the correction step to settle.
    """
    if state.prev_score is None:
        state.prev_score = current
        return False
    if state.prev_score - current > delta_adju:
        return True
    state.prev_score = current
    return False


def _tail_layout(queue: LatentQueue, f_judg: int, L_zig: int, rounds: int):
    """Target levels and frame indices for a regenerated tail.

    Position p (0-based from f_judg) maps to queue group (f_judg - 1 + p)
    // L_zig; levels extrapolate one per group past the incumbent tail for
    the latents that are built and trimmed.
    """
    L = len(queue)
    tail = queue.items[f_judg - 1:]
    gid0 = (f_judg - 1) // L_zig
    base = tail[0].level

    def level_at(p: int) -> int:
        return base + (f_judg - 1 + p) // L_zig - gid0

    for p, it in enumerate(tail):
        if it.level != level_at(p):
            raise StateError("tail is not group-contiguous; cannot regenerate")
    total = rounds * L_zig
    levels = [level_at(p) for p in range(total)]
    last_frame = tail[-1].frame_index
    frames = [
        tail[p].frame_index if p < len(tail) else last_frame + (p - len(tail) + 1)
        for p in range(total)
    ]
    return levels, frames


def expand_search(
    queue: LatentQueue,
    config: SchedulerConfig,
    sampler: SamplerState,
    denoiser: Denoiser,
    f_judg: int,
    *,
    noise_tags: Sequence[str] | None = None,
    prompt_track: PromptTrack | None = None,
    n_deq: int = 0,
    trace: GenerationTrace | None = None,
    iteration: int = 0,
    pass_id_start: int = 0,
) -> list[list[FrameLatent]]:
    """Regenerate the queue tail n_samp times from fresh noise.

    Each candidate grows under `f_guid` frozen guidance latents through
    rounds of {enqueue L_zig fresh draws, one windowed pass}; fresh draws are
    keyed per (seed, frame, tag) with a distinct tag per candidate.  Returns
    candidates of exactly the incumbent tail's length and levels; the
    guidance latents are never mutated.
    """
    L = len(queue)
    f_guid = config.f_guid_
    if f_judg - 1 - f_guid < 0:
        raise StateError(f"not enough accepted prefix for f_guid={f_guid}")
    if L < f_judg + config.f_eval:
        raise StateError("queue too short for reflection at this judgment index")
    tail_count = L - f_judg + 1
    rounds = math.ceil(tail_count / config.L_zig)
    levels, frames = _tail_layout(queue, f_judg, config.L_zig, rounds)
    T = sampler.schedule.T
    guidance = queue.items[f_judg - 1 - f_guid:f_judg - 1]
    guidance_before = [g.data.copy() for g in guidance]

    if noise_tags is None:
        noise_tags = [f"reflect-{iteration}-{k}" for k in range(config.n_samp)]
    if len(noise_tags) != config.n_samp:
        raise ParameterError(f"need {config.n_samp} noise tags")

    candidates = []
    pass_id = pass_id_start
    for k, tag in enumerate(noise_tags):
        temp = LatentQueue(items=[g.copy() for g in guidance], group_width=1)
        for r in range(rounds):
            for p in range(r * config.L_zig, (r + 1) * config.L_zig):
                enq_level = levels[p] + (rounds - r)
                if enq_level > T:
                    raise StateError(
                        f"regeneration would start above the ladder (level {enq_level})"
                    )
                temp.enqueue(FrameLatent(
                    rng.normal(config.seed, frames[p], tag, (config.l, config.d)),
                    frames[p],
                    enq_level,
                ))
            run_window_pass(
                temp, denoiser, sampler, config.f0, config.stride_,
                commit_from=f_guid, allow_small=True,
                prompt_track=prompt_track, n_deq=n_deq,
                trace=trace, iteration=iteration, phase="search", pass_id=pass_id,
            )
            pass_id += 1
        candidates.append(temp.items[f_guid:f_guid + tail_count])

    for g, before in zip(guidance, guidance_before):
        if not np.array_equal(g.data, before):
            raise StateError("guidance latent mutated during expanded search")
    return candidates


def maybe_correct(
    queue: LatentQueue,
    candidates: list[list[FrameLatent]],
    config: SchedulerConfig,
    state: ReflectionState,
    f_judg: int,
    c_init: float,
    *,
    trace: GenerationTrace | None = None,
    iteration: int = 0,
) -> bool:
    """Score candidates and splice the best over the tail if it beats c_init.

    Ties at the max go to the lowest candidate index.  Returns True when a
    correction was applied.  n_eval always increments; the accepted score
    never decreases.
    """
    ref = queue.items[f_judg - 1 - config.f_ref:f_judg - 1]
    scores = [
        latents_c_score(cand[:config.f_eval], ref) for cand in candidates
    ]
    best = int(np.argmax(scores))
    state.n_eval += 1
    corrected = scores[best] > c_init
    if trace is not None:
        trace.record(
            "search", iteration, scores=scores, chosen=best if corrected else None,
            c_init=c_init,
        )
    if corrected:
        queue.items[f_judg - 1:] = [x.copy() for x in candidates[best]]
        state.prev_score = scores[best]
        state.n_corr += 1
        if trace is not None:
            trace.record(
                "correct", iteration, candidate=best,
                score_before=c_init, score_after=scores[best],
            )
    else:
        state.prev_score = c_init
    state.check()
    return corrected


def reflection_cost(n_adju: int, n_samp: int, L: int, f_judg: int, L_zig: int) -> int:
    """Extra inference passes spent on searches: n_adju * n_samp * rounds."""
    if min(n_samp, L, f_judg, L_zig) < 1 or n_adju < 0:
        raise ParameterError("arguments must be positive (n_adju >= 0)")
    return n_adju * n_samp * math.ceil((L - f_judg + 1) / L_zig)


def reflection_rates(state: ReflectionState) -> tuple[float | None, float | None]:
    """(R_corr, R_succ); None for a zero denominator rather than a crash."""
    r_corr = state.n_corr / state.n_all if state.n_all else None
    r_succ = state.n_corr / state.n_eval if state.n_eval else None
    return r_corr, r_succ
