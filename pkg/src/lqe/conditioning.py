"""Queue-position to prompt mapping for multi-prompt runs.

Each prompt controls N_prom consecutive output frames.  The prompt for a
queue position is ceil((l + n_deq) / N_prom) clamped to the prompt count,
where n_deq is the number of already-dequeued clean frames; l + n_deq is
exactly the position's global frame index.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .errors import ParameterError


@dataclass(frozen=True)
class PromptTrack:
    prompts: tuple[str, ...]
    N_prom: int

    def __post_init__(self):
        object.__setattr__(self, "prompts", tuple(self.prompts))
        if not self.prompts:
            raise ParameterError("need at least one prompt")
        if self.N_prom < 1:
            raise ParameterError("N_prom must be >= 1")

    @property
    def n_prom(self) -> int:
        return len(self.prompts)

    def index_for(self, l: int, n_deq: int) -> int:
        return prompt_index(l, n_deq, self.N_prom, self.n_prom)

    def condition_for(self, l: int, n_deq: int) -> str:
        return self.prompts[self.index_for(l, n_deq) - 1]

    def condition_for_frame(self, frame_index: int) -> str:
        # frame_index == l + n_deq for the position holding that frame.
        return self.condition_for(frame_index, 0)


def prompt_index(l: int, n_deq: int, N_prom: int, n_prom: int) -> int:
    """1-based prompt index for queue position l after n_deq dequeues.

    Clamped to n_prom: warm-up frames past the scripted span keep the last
    prompt instead of erroring.
    """
    if l < 1 or n_deq < 0 or N_prom < 1 or n_prom < 1:
        raise ParameterError("need l >= 1, n_deq >= 0, N_prom >= 1, n_prom >= 1")
    return min(math.ceil((l + n_deq) / N_prom), n_prom)
