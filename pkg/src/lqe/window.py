"""Sliding-window inference over the latent queue.

One pass moves every latent exactly one ladder level down.  Windows of width
f0 advance by `stride`; after each window's reverse step only the first
`stride` outputs are committed (everything remaining in the final window), and
a commit filter guarantees each position is written by exactly one window even
when the stride does not divide the queue length.

The guided variant prepends m_guid sparsely sampled earlier latents as
read-only context; their predictions are discarded and their stored state is
never touched.
"""

from __future__ import annotations

import math

import numpy as np

from . import rng
from .conditioning import PromptTrack
from .denoisers import Denoiser
from .errors import ConfigError, SizeError, StateError
from .sampler import SamplerState, step
from .schedule import LatentQueue
from .trace import GenerationTrace


def select_guidance_indices(
    l: int,
    m_guid: int,
    L_zig: int,
    sample: str = "even",
    seed: int = 0,
) -> list[int] | None:
    """Guidance positions for a window starting at l (1-based).

    Picks m_guid distinct indices over the min(m_guid * L_zig, l - 1)
    positions before l, always including l - 1.  The default is deterministic
    even spacing; sample="random" draws them from a stream keyed by (seed, l)
    instead.  Returns None when l <= m_guid (guidance disabled: not enough
    preceding latents).
    """
    if l <= m_guid:
        return None
    s_range = min(m_guid * L_zig, l - 1)
    lo, hi = l - s_range, l - 1
    if m_guid == 1:
        return [hi]
    if sample == "random":
        pool = np.arange(lo, hi)
        picks = rng.stream(seed, l, "guid-sample").choice(pool, m_guid - 1, replace=False)
        return sorted(int(p) for p in picks) + [hi]
    # hi - lo >= m_guid - 1, so rounding keeps the indices strictly increasing.
    return [lo + round(j * (hi - lo) / (m_guid - 1)) for j in range(m_guid)]


def run_window_pass(
    queue: LatentQueue,
    denoiser: Denoiser,
    sampler: SamplerState,
    f0: int,
    stride: int,
    *,
    m_guid: int = 0,
    L_zig: int = 1,
    guid_sample: str = "even",
    guid_seed: int = 0,
    commit_from: int = 0,
    allow_small: bool = False,
    prompt_track: PromptTrack | None = None,
    n_deq: int = 0,
    trace: GenerationTrace | None = None,
    iteration: int = 0,
    phase: str = "",
    pass_id: int = 0,
) -> int:
    """One full inference pass; returns the number of denoiser calls.

    Positions below `commit_from` are frozen context (used by candidate
    regeneration); everything else is committed exactly once.
    """
    L = len(queue)
    if L == 0:
        return 0
    if L < f0 and not allow_small:
        raise SizeError(f"queue length {L} shorter than window f0={f0}")
    if not 0 <= m_guid < f0:
        raise ConfigError(f"need 0 <= m_guid < f0, got m_guid={m_guid}")
    if m_guid and f0 - m_guid < stride:
        raise ConfigError(
            f"guided local width f0 - m_guid = {f0 - m_guid} below stride {stride}"
        )
    if any(it.level == 0 for it in queue.items[commit_from:]):
        raise StateError("queue holds a clean latent; dequeue before inferring")

    committed = np.zeros(L, dtype=bool)
    committed[:commit_from] = True

    if L <= f0:
        n_iter = 1
    elif m_guid:
        n_iter = math.ceil((L - f0 + m_guid) / stride) + 1
    else:
        n_iter = math.ceil((L - f0) / stride) + 1

    calls = 0
    for i in range(n_iter):
        final = i == n_iter - 1
        if L <= f0:
            s, local_width, guided = 0, L, False
        else:
            s = i * stride
            guided = m_guid > 0 and s + 1 > m_guid
            local_width = f0 - m_guid if guided else f0
            if final:
                # Final window is flush with the tail; re-derive guidance
                # eligibility from its actual start.
                s = L - local_width
                guided = m_guid > 0 and s + 1 > m_guid
                local_width = f0 - m_guid if guided else f0
                s = L - local_width

        local = queue.items[s:s + local_width]
        guidance_idx: list[int] = []
        if guided:
            sel = select_guidance_indices(s + 1, m_guid, L_zig, guid_sample, guid_seed)
            guidance_idx = [] if sel is None else sel
            guided = sel is not None
        guidance = [queue.items[g - 1] for g in guidance_idx]
        window = guidance + local

        if prompt_track is not None:
            start_cond = prompt_track.condition_for(s + 1, n_deq)
            conds = [
                prompt_track.condition_for_frame(g.frame_index) for g in guidance
            ] + [start_cond] * len(local)
            prompt_idx = prompt_track.index_for(s + 1, n_deq)
        else:
            conds = ["default"] * len(window)
            prompt_idx = 1

        eps = denoiser(window, conds)
        if len(eps) != len(window):
            raise SizeError(
                f"denoiser returned {len(eps)} predictions for {len(window)} latents"
            )
        calls += 1

        # Span over positions this window actually advances: previously
        # committed positions inside an overlapping window are read-only
        # context (like guidance) and already sit one level lower.
        fresh = [local[j].level for j in range(local_width) if not committed[s + j]]
        span = max(fresh) - min(fresh) if fresh else 0

        # Commit range inside the local portion, filtered to first-writer-wins.
        commit_end = local_width if final else min(stride, local_width)
        targets = [
            j for j in range(commit_end)
            if not committed[s + j]
        ]
        stepped = step(
            sampler,
            [local[j] for j in targets],
            [eps[len(guidance) + j] for j in targets],
        )
        for j, new in zip(targets, stepped):
            queue.items[s + j] = new
            committed[s + j] = True

        if trace is not None:
            trace.record(
                "window",
                iteration,
                phase=phase,
                pass_id=pass_id,
                start=s + 1,
                width=len(window),
                span=span,
                guided=guided,
                guidance_indices=guidance_idx,
                queue_len=L,
                prompt_index=prompt_idx,
            )

    if not committed.all():
        raise StateError("window schedule left uncommitted positions")
    return calls


def infer_queue_once(
    queue: LatentQueue,
    denoiser: Denoiser,
    sampler: SamplerState,
    f0: int,
    stride: int,
    **kwargs,
) -> int:
    """Plain (unguided) pass; every latent ends one level lower."""
    return run_window_pass(queue, denoiser, sampler, f0, stride, m_guid=0, **kwargs)


def infer_queue_once_guided(
    queue: LatentQueue,
    denoiser: Denoiser,
    sampler: SamplerState,
    f0: int,
    stride: int,
    m_guid: int,
    L_zig: int,
    **kwargs,
) -> int:
    """Pass with long-range frame guidance prepended to each eligible window."""
    return run_window_pass(
        queue, denoiser, sampler, f0, stride, m_guid=m_guid, L_zig=L_zig, **kwargs
    )


def expected_call_count(L: int, f0: int, stride: int, m_guid: int = 0) -> int:
    """Closed-form denoiser-call count for one pass."""
    if L <= f0:
        return 1
    return math.ceil((L - f0 + m_guid) / stride) + 1
