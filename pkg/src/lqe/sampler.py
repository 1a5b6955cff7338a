"""Forward noising and per-frame reverse steps.

The reverse step is the deterministic update (eta = 0):

    x0_hat  = (x_t - sqrt(1 - a_t) * eps_hat) / sqrt(a_t)
    x_{t-1} = sqrt(a_{t-1}) * x0_hat + sqrt(1 - a_{t-1}) * eps_hat

with a_t = alpha_bar at the frame's own level, so frames at different levels
inside one window are stepped independently with their own coefficients.
Coefficient math runs in float64; latents stay float32.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import OrderingError, ParameterError, ShapeError, StateError
from .schedule import FrameLatent, NoiseSchedule


@dataclass(frozen=True)
class SamplerState:
    """Schedule plus the stochasticity knob (0 = deterministic, the default).

    `history` slot per frame is deliberately absent: higher-order multistep
    samplers are out of scope, but a replacement stepper can thread its own
    per-frame history through the denoiser condition channel.
    """

    schedule: NoiseSchedule
    eta: float = 0.0

    def __post_init__(self):
        if not 0.0 <= self.eta <= 1.0:
            raise ParameterError(f"eta must be in [0, 1], got {self.eta}")


def add_noise(
    sampler: SamplerState,
    x: FrameLatent,
    level_to: int,
    noise: np.ndarray,
) -> FrameLatent:
    """Noise `x` from its current level up to `level_to` with the given draw.

    x_j = sqrt(a_j / a_i) * x + sqrt(1 - a_j / a_i) * eps.  The caller owns
    the noise draw so that reproducibility is keyed outside the sampler.
    """
    if level_to <= x.level:
        raise OrderingError(f"cannot noise from level {x.level} to {level_to}")
    if noise.shape != x.data.shape:
        raise ShapeError(f"noise shape {noise.shape} != latent shape {x.data.shape}")
    a_i = sampler.schedule.alpha_bar_at(x.level)
    a_j = sampler.schedule.alpha_bar_at(level_to)
    ratio = a_j / a_i
    out = np.sqrt(ratio) * x.data.astype(np.float64) + np.sqrt(1.0 - ratio) * noise.astype(np.float64)
    return FrameLatent(out.astype(np.float32), x.frame_index, level_to)


def step(
    sampler: SamplerState,
    latents: list[FrameLatent],
    eps_hat: list[np.ndarray],
    noise: list[np.ndarray] | None = None,
) -> list[FrameLatent]:
    """One reverse step per frame, each moving exactly one level down.

    `noise` supplies the stochastic term when eta > 0; unused (and may be
    None) for the deterministic default.
    """
    if len(eps_hat) != len(latents):
        raise ShapeError(f"{len(eps_hat)} predictions for {len(latents)} latents")
    out = []
    for i, (lat, eps) in enumerate(zip(latents, eps_hat)):
        if lat.level <= 0:
            raise StateError(f"frame {lat.frame_index} already at the clean level")
        if eps.shape != lat.data.shape:
            raise ShapeError(
                f"prediction shape {eps.shape} != latent shape {lat.data.shape}"
            )
        a_t = sampler.schedule.alpha_bar_at(lat.level)
        a_prev = sampler.schedule.alpha_bar_at(lat.level - 1)
        x = lat.data.astype(np.float64)
        e = eps.astype(np.float64)
        x0_hat = (x - np.sqrt(1.0 - a_t) * e) / np.sqrt(a_t)
        if sampler.eta > 0.0:
            # DDIM with eta > 0: shrink the direction term and add fresh noise.
            sigma = sampler.eta * np.sqrt(
                (1.0 - a_prev) / (1.0 - a_t) * (1.0 - a_t / a_prev)
            )
            dir_coeff = np.sqrt(max(1.0 - a_prev - sigma**2, 0.0))
            if noise is None:
                raise ParameterError("eta > 0 requires a noise draw per frame")
            nxt = np.sqrt(a_prev) * x0_hat + dir_coeff * e + sigma * noise[i].astype(np.float64)
        else:
            nxt = np.sqrt(a_prev) * x0_hat + np.sqrt(1.0 - a_prev) * e
        out.append(FrameLatent(nxt.astype(np.float32), lat.frame_index, lat.level - 1))
    return out
