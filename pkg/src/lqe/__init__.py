"""Latent-queue engine: a frame-level diagonal-denoising inference scheduler.

The package simulates long-sequence video generation schedulers against
analytic toy denoisers: a FIFO rolling-queue baseline, a two-stage
training-inference alignment procedure, and consistency-driven enhancement
(self-reflection plus long-range frame guidance).
"""

from .config import MODES, PRESETS, SchedulerConfig, load_config, preset
from .consistency import c_score, noisy_score_correlation, score_curve
from .denoisers import (
    TargetSequence,
    drift_denoiser,
    make_target_walk,
    perfect_target_denoiser,
)
from .errors import LqeError
from .generators import frames_array, generate, run_fifo, run_stage2_only, run_tta
from .migl import read_latents, write_latents
from .sampler import SamplerState, add_noise, step
from .schedule import FrameLatent, LatentQueue, NoiseSchedule, build_schedule
from .trace import GenerationTrace, summarize

__version__ = "0.1.0"

__all__ = [
    "MODES",
    "PRESETS",
    "SchedulerConfig",
    "load_config",
    "preset",
    "c_score",
    "noisy_score_correlation",
    "score_curve",
    "TargetSequence",
    "drift_denoiser",
    "make_target_walk",
    "perfect_target_denoiser",
    "LqeError",
    "frames_array",
    "generate",
    "run_fifo",
    "run_stage2_only",
    "run_tta",
    "read_latents",
    "write_latents",
    "SamplerState",
    "add_noise",
    "step",
    "FrameLatent",
    "LatentQueue",
    "NoiseSchedule",
    "build_schedule",
    "GenerationTrace",
    "summarize",
]
