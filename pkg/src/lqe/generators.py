"""The end-to-end generation procedures.

Four modes share one window engine:

* ``fifo``        -- rolling queue of T pairwise-distinct levels; one frame
                     dequeued per pass.
* ``tta``         -- two-stage: zigzag stage 1 (groups of L_zig share a
                     level, dequeued in blocks at tau_{e-1}) then uniform
                     stage-2 passes down to tau_0.
* ``tta+dce``     -- tta plus long-range frame guidance in every stage-1
                     window and the self-reflection check each iteration.
* ``stage2-only`` -- ablation: all frames start as Gaussians at tau_T and
                     are denoised at a single shared level throughout.

With the perfect-target denoiser all four reproduce the target sequence
exactly, so the modes differ only in bookkeeping -- which is what the tests
pin down.
"""

from __future__ import annotations

import itertools
import math

import numpy as np

from . import rng
from .conditioning import PromptTrack
from .config import SchedulerConfig
from .consistency import (
    ReflectionState,
    expand_search,
    latents_c_score,
    maybe_correct,
    should_trigger,
)
from .denoisers import Denoiser
from .errors import ConfigError, SizeError, StateError
from .sampler import SamplerState, add_noise
from .schedule import FrameLatent, LatentQueue, build_schedule
from .trace import GenerationTrace
from .window import run_window_pass


def make_sampler(config: SchedulerConfig) -> SamplerState:
    return SamplerState(build_schedule(config.T, config.beta_min, config.beta_max))


def make_prompt_track(config: SchedulerConfig) -> PromptTrack | None:
    if list(config.prompts) == ["default"] and not config.N_prom:
        return None
    return PromptTrack(tuple(config.prompts), config.N_prom_)


def targets_needed(config: SchedulerConfig) -> int:
    """Largest global frame index any run of this config can touch."""
    if config.mode == "fifo":
        return config.T + config.N
    if config.mode == "stage2-only":
        return config.N
    n_iter = math.ceil(config.N / config.L_zig)
    # One extra group: candidate regeneration may extend past the tail.
    return config.init_queue_length + (n_iter + 1) * config.L_zig


def make_clean_seed(
    config: SchedulerConfig,
    denoiser: Denoiser,
    sampler: SamplerState,
    trace: GenerationTrace | None = None,
) -> list[FrameLatent]:
    """f0 clean latents from a full single-window denoise of pure noise."""
    queue = LatentQueue(
        items=[
            FrameLatent(
                rng.normal(config.seed, i, "seed-init", (config.l, config.d)),
                i,
                config.T,
            )
            for i in range(1, config.f0 + 1)
        ],
        group_width=1,
    )
    for _ in range(config.T):
        run_window_pass(
            queue, denoiser, sampler, config.f0, config.stride_,
            trace=trace, iteration=0, phase="seed",
        )
    return queue.items


# ---------------------------------------------------------------------------
# FIFO baseline
# ---------------------------------------------------------------------------

def init_fifo_queue(
    clean_seed: list[FrameLatent],
    sampler: SamplerState,
    seed: int = 0,
) -> LatentQueue:
    """Queue of length T at pairwise-distinct levels tau_1..tau_T.

    Positions 1..T-f0 replicate the first clean latent (noised to their
    level); positions T-f0+i carry the i-th clean latent.  Every position is
    relabeled with its own frame index so outputs count 1..N.
    """
    T = sampler.schedule.T
    f0 = len(clean_seed)
    if f0 < 1 or f0 > T:
        raise SizeError(f"need 1 <= seed length <= T, got {f0} for T={T}")
    if any(x.level != 0 for x in clean_seed):
        raise StateError("clean seed must be at the clean level")
    items = []
    for pos in range(1, T + 1):
        src = clean_seed[0] if pos <= T - f0 else clean_seed[pos - (T - f0) - 1]
        base = FrameLatent(src.data.copy(), pos, 0)
        noise = rng.normal(seed, pos, "init-noise", base.data.shape)
        items.append(add_noise(sampler, base, pos, noise))
    queue = LatentQueue(items=items, group_width=1)
    queue.check_invariants()
    return queue


def run_fifo(
    config: SchedulerConfig,
    denoiser: Denoiser,
    clean_seed: list[FrameLatent] | None = None,
) -> tuple[list[FrameLatent], GenerationTrace]:
    """N iterations of {infer pass, dequeue clean head, enqueue Gaussian}."""
    if config.mode != "fifo":
        raise ConfigError(f"run_fifo needs mode 'fifo', got {config.mode!r}")
    sampler = make_sampler(config)
    trace = GenerationTrace()
    if clean_seed is None:
        clean_seed = make_clean_seed(config, denoiser, sampler, trace)
    pt = make_prompt_track(config)
    queue = init_fifo_queue(clean_seed, sampler, config.seed)
    T = config.T

    outputs: list[FrameLatent] = []
    for it in range(1, config.N + 1):
        run_window_pass(
            queue, denoiser, sampler, config.f0, config.stride_,
            prompt_track=pt, n_deq=len(outputs),
            trace=trace, iteration=it, phase="fifo", pass_id=it,
        )
        head = queue.dequeue(1)[0]
        if head.level != 0:
            raise StateError(f"dequeued frame {head.frame_index} at level {head.level}")
        outputs.append(head)
        trace.record(
            "dequeue", it, phase="fifo", frames=[head.frame_index],
            level=0, queue_len=len(queue),
        )
        nf = T + it
        queue.enqueue(FrameLatent(
            rng.normal(config.seed, nf, "enqueue", (config.l, config.d)), nf, T,
        ))
        trace.record("enqueue", it, phase="fifo", frames=[nf], level=T,
                     queue_len=len(queue))
        queue.check_invariants()
    return outputs, trace


# ---------------------------------------------------------------------------
# Two-stage training-inference alignment
# ---------------------------------------------------------------------------

def init_zigzag_queue(
    clean_seed: list[FrameLatent],
    config: SchedulerConfig,
    denoiser: Denoiser,
    sampler: SamplerState,
    *,
    guided: bool = False,
    prompt_track: PromptTrack | None = None,
    trace: GenerationTrace | None = None,
) -> LatentQueue:
    """Build the stage-1 queue: f0 seed latents plus guided growth rounds.

    The seed latents are noised into the n_zig top groups (head group at
    tau_{T - n_zig}); each round enqueues L_zig fresh Gaussians at tau_T and
    runs one infer pass over the whole growing queue, so earlier latents
    guide later ones.  The result holds f0 + rounds * L_zig latents in
    L_zig-wide groups spanning tau_e .. tau_{T-1}.
    """
    T, L_zig = config.T, config.L_zig
    if len(clean_seed) != config.f0:
        raise SizeError(f"need f0={config.f0} seed latents, got {len(clean_seed)}")
    if config.e >= T - config.n_zig:
        raise ConfigError("no room for stage 1: need e < T - ceil(f0/L_zig)")
    items = []
    for i, x in enumerate(clean_seed, start=1):
        group = math.ceil(i / L_zig)
        level = T - config.n_zig + group - 1
        base = FrameLatent(x.data.copy(), i, 0)
        noise = rng.normal(config.seed, i, "init-noise", base.data.shape)
        items.append(add_noise(sampler, base, level, noise))
    queue = LatentQueue(items=items, group_width=L_zig)
    queue.check_invariants()

    next_frame = config.f0 + 1
    for r in range(1, config.zigzag_rounds + 1):
        level = queue.items[-1].level + 1
        new_frames = list(range(next_frame, next_frame + L_zig))
        for nf in new_frames:
            queue.enqueue(FrameLatent(
                rng.normal(config.seed, nf, "enqueue", (config.l, config.d)),
                nf, level,
            ))
        next_frame += L_zig
        if trace is not None:
            trace.record("enqueue", r, phase="init", frames=new_frames,
                         level=level, queue_len=len(queue))
        run_window_pass(
            queue, denoiser, sampler, config.f0, config.stride_,
            m_guid=config.m_guid if guided else 0, L_zig=L_zig,
            guid_sample=config.guid_sample, guid_seed=config.seed,
            prompt_track=prompt_track, n_deq=0,
            trace=trace, iteration=r, phase="init", pass_id=r,
        )
        queue.check_invariants()
    return queue


def _self_reflect(
    queue: LatentQueue,
    config: SchedulerConfig,
    sampler: SamplerState,
    denoiser: Denoiser,
    state: ReflectionState,
    *,
    prompt_track: PromptTrack | None,
    n_deq: int,
    trace: GenerationTrace,
    iteration: int,
    pass_ids: "itertools.count",
) -> None:
    """One consistency check at f_judg; search and correct on a trigger."""
    L = len(queue)
    fj = config.f_judg_for(L)
    if fj < config.f_eval + config.f_ref + 1 or L < fj + config.f_eval:
        return
    p_idx = prompt_track.index_for(fj, n_deq) if prompt_track else 1
    if state.last_prompt_index is not None and p_idx != state.last_prompt_index:
        # New prompt segment: scores across the boundary are incomparable.
        state.prev_score = None
    state.last_prompt_index = p_idx

    q_eval = queue.items[fj - 1:fj - 1 + config.f_eval]
    q_ref = queue.items[fj - 1 - config.f_ref:fj - 1]
    current = latents_c_score(q_eval, q_ref)
    state.n_all += 1
    trace.record("eval", iteration, phase="stage1", score=current,
                 baseline=state.prev_score, f_judg=fj, queue_len=L)
    if should_trigger(state, current, config.delta_adju):
        rounds = math.ceil((L - fj + 1) / config.L_zig)
        start = next(pass_ids)
        for _ in range(config.n_samp * rounds - 1):
            next(pass_ids)
        candidates = expand_search(
            queue, config, sampler, denoiser, fj,
            prompt_track=prompt_track, n_deq=n_deq,
            trace=trace, iteration=iteration, pass_id_start=start,
        )
        maybe_correct(
            queue, candidates, config, state, fj, current,
            trace=trace, iteration=iteration,
        )
    state.check()


def run_tta(
    config: SchedulerConfig,
    denoiser: Denoiser,
    clean_seed: list[FrameLatent] | None = None,
) -> tuple[list[FrameLatent], GenerationTrace]:
    """Stage-1 zigzag loop then e-1 uniform stage-2 passes."""
    if config.mode not in ("tta", "tta+dce"):
        raise ConfigError(f"run_tta needs a tta mode, got {config.mode!r}")
    dce = config.mode == "tta+dce"
    sampler = make_sampler(config)
    trace = GenerationTrace()
    if clean_seed is None:
        clean_seed = make_clean_seed(config, denoiser, sampler, trace)
    pt = make_prompt_track(config)
    queue = init_zigzag_queue(
        clean_seed, config, denoiser, sampler,
        guided=dce, prompt_track=pt, trace=trace,
    )
    state = ReflectionState()
    pass_ids = itertools.count(config.zigzag_rounds + 1)
    collected: list[FrameLatent] = []
    next_frame = config.init_queue_length + 1
    it = config.zigzag_rounds
    n_iter = math.ceil(config.N / config.L_zig)

    for _ in range(n_iter):
        it += 1
        if dce:
            _self_reflect(
                queue, config, sampler, denoiser, state,
                prompt_track=pt, n_deq=len(collected),
                trace=trace, iteration=it, pass_ids=pass_ids,
            )
        run_window_pass(
            queue, denoiser, sampler, config.f0, config.stride_,
            m_guid=config.m_guid if dce else 0, L_zig=config.L_zig,
            guid_sample=config.guid_sample, guid_seed=config.seed,
            prompt_track=pt, n_deq=len(collected),
            trace=trace, iteration=it, phase="stage1", pass_id=next(pass_ids),
        )
        head = queue.dequeue(config.L_zig)
        if any(x.level != config.e - 1 for x in head):
            raise StateError(
                f"stage-1 dequeue at levels {[x.level for x in head]}, "
                f"expected {config.e - 1}"
            )
        collected.extend(head)
        trace.record(
            "dequeue", it, phase="stage1", frames=[x.frame_index for x in head],
            level=config.e - 1, queue_len=len(queue),
        )
        level = queue.items[-1].level + 1
        new_frames = list(range(next_frame, next_frame + config.L_zig))
        for nf in new_frames:
            queue.enqueue(FrameLatent(
                rng.normal(config.seed, nf, "enqueue", (config.l, config.d)),
                nf, level,
            ))
        next_frame += config.L_zig
        trace.record("enqueue", it, phase="stage1", frames=new_frames,
                     level=level, queue_len=len(queue))
        queue.check_invariants()

    buf = LatentQueue(items=collected, group_width=1)
    for _ in range(config.e - 1):
        it += 1
        run_window_pass(
            buf, denoiser, sampler, config.f0, config.stride_,
            allow_small=True, prompt_track=pt, n_deq=0,
            trace=trace, iteration=it, phase="stage2", pass_id=next(pass_ids),
        )
    outputs = buf.items[:config.N]
    if any(x.level != 0 for x in outputs):
        raise StateError("stage 2 ended above the clean level")
    return outputs, trace


# ---------------------------------------------------------------------------
# Stage-2-only ablation
# ---------------------------------------------------------------------------

def run_stage2_only(
    config: SchedulerConfig,
    denoiser: Denoiser,
) -> tuple[list[FrameLatent], GenerationTrace]:
    """All N frames as Gaussians at tau_T, T uniform-level passes, span 0."""
    if config.mode != "stage2-only":
        raise ConfigError(f"run_stage2_only needs mode 'stage2-only', got {config.mode!r}")
    sampler = make_sampler(config)
    trace = GenerationTrace()
    pt = make_prompt_track(config)
    buf = LatentQueue(
        items=[
            FrameLatent(
                rng.normal(config.seed, i, "enqueue", (config.l, config.d)),
                i, config.T,
            )
            for i in range(1, config.N + 1)
        ],
        group_width=1,
    )
    for it in range(1, config.T + 1):
        run_window_pass(
            buf, denoiser, sampler, config.f0, config.stride_,
            allow_small=True, prompt_track=pt, n_deq=0,
            trace=trace, iteration=it, phase="stage2", pass_id=it,
        )
    return buf.items, trace


# ---------------------------------------------------------------------------
# Dispatch
# ---------------------------------------------------------------------------

def generate(
    config: SchedulerConfig,
    denoiser: Denoiser,
    clean_seed: list[FrameLatent] | None = None,
) -> tuple[list[FrameLatent], GenerationTrace]:
    """Run the configured mode; returns (N clean frames, trace)."""
    if config.N == 0:
        return [], GenerationTrace()
    if config.mode == "fifo":
        return run_fifo(config, denoiser, clean_seed)
    if config.mode in ("tta", "tta+dce"):
        return run_tta(config, denoiser, clean_seed)
    return run_stage2_only(config, denoiser)


def frames_array(outputs: list[FrameLatent]) -> np.ndarray:
    """Stack clean frames into an (N, l, d) float32 array."""
    if not outputs:
        return np.zeros((0, 0, 0), dtype=np.float32)
    idx = [x.frame_index for x in outputs]
    if idx != list(range(idx[0], idx[0] + len(idx))):
        raise StateError(f"output frames not consecutive: {idx[:8]}...")
    return np.stack([x.data for x in outputs])
