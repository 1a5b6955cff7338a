"""Run configuration: hyperparameters, validation, and the flat config file.

The on-disk format is a UTF-8 text file of `key = value` lines; values are
JSON fragments (numbers, strings, arrays).  Unknown keys are rejected.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

from .errors import ConfigError, FormatError

MODES = ("fifo", "tta", "tta+dce", "stage2-only")


@dataclass
class SchedulerConfig:
    T: int = 64                 # denoising step count / ladder height
    f0: int = 16                # foundation window width
    L_zig: int = 4              # zigzag group width (1 = FIFO layout)
    e: int = 10                 # stage-2 entry index; stage 2 runs e-1 steps
    delta_adju: float = 0.01    # self-reflection trigger threshold
    m_guid: int = 6             # long-range guidance latents per window
    n_samp: int = 4             # candidates per expanded search
    f_ref: int = 8              # reference latents for consistency scoring
    f_eval: int = 4             # evaluated latents for consistency scoring
    f_judg: int = 0             # judgment index, 1-based; 0 = derive default
    f_guid: int = 0             # search guidance latents; 0 = derive f0 // 2
    N: int = 64                 # frames to generate
    N_prom: int = 0             # frames per prompt; 0 = single-prompt run
    stride: int = 0             # sliding-window stride; 0 = derive f0 // 2
    guid_sample: str = "even"   # guidance-index selection: "even" or "random"
    seed: int = 0
    mode: str = "tta"
    l: int = 16                 # tokens per frame
    d: int = 8                  # channels per token
    beta_min: float = 1e-4
    beta_max: float = 2e-2
    prompts: list[str] = field(default_factory=lambda: ["default"])

    def __post_init__(self):
        self.validate()

    # -- derived quantities ------------------------------------------------

    @property
    def stride_(self) -> int:
        return self.stride if self.stride else self.f0 // 2

    @property
    def f_guid_(self) -> int:
        return self.f_guid if self.f_guid else self.f0 // 2

    @property
    def n_zig(self) -> int:
        return math.ceil(self.f0 / self.L_zig)

    @property
    def zigzag_rounds(self) -> int:
        return self.T - self.n_zig - self.e

    @property
    def init_queue_length(self) -> int:
        """Closed form for the stage-1 queue length after initialization."""
        return self.f0 + self.zigzag_rounds * self.L_zig

    @property
    def N_padded(self) -> int:
        """N rounded up to a multiple of L_zig (stage 1 dequeues in blocks)."""
        return math.ceil(self.N / self.L_zig) * self.L_zig

    @property
    def N_prom_(self) -> int:
        return self.N_prom if self.N_prom else self.N

    def f_judg_for(self, queue_length: int) -> int:
        """Judgment index (1-based) for a queue of the given length."""
        if self.f_judg:
            return self.f_judg
        return queue_length - 2 * self.L_zig - self.f_eval + 1

    # -- validation --------------------------------------------------------

    def validate(self) -> None:
        if self.mode not in MODES:
            raise ConfigError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.T < 2:
            raise ConfigError("T must be >= 2")
        if not 1 <= self.f0 <= self.T:
            raise ConfigError("need 1 <= f0 <= T")
        if not 1 <= self.L_zig <= self.f0:
            raise ConfigError("need 1 <= L_zig <= f0")
        if not 1 <= self.e <= self.T:
            raise ConfigError("need 1 <= e <= T")
        if not 0 <= self.m_guid < self.f0:
            raise ConfigError("need 0 <= m_guid < f0")
        if self.f_eval < 1 or self.f_ref < self.f_eval:
            raise ConfigError("need f_ref >= f_eval >= 1")
        if self.N < 0:
            raise ConfigError("N must be non-negative")
        if self.l < 1 or self.d < 1:
            raise ConfigError("latent dims l, d must be positive")
        if self.n_samp < 1:
            raise ConfigError("n_samp must be >= 1")
        if self.guid_sample not in ("even", "random"):
            raise ConfigError("guid_sample must be 'even' or 'random'")
        if self.mode in ("tta", "tta+dce"):
            if self.f0 % self.L_zig:
                raise ConfigError("tta modes need L_zig to divide f0")
            if self.e >= self.T - self.n_zig:
                raise ConfigError(
                    f"e={self.e} leaves no room for stage 1 (need e < T - ceil(f0/L_zig))"
                )
            fj = self.f_judg_for(self.init_queue_length)
            if not self.f_eval + self.f_ref <= fj:
                raise ConfigError("need f_eval + f_ref <= f_judg")
            if fj + self.f_eval - 1 > self.init_queue_length:
                raise ConfigError("f_judg + f_eval - 1 exceeds the stage-1 queue")
        if self.N_prom:
            if self.N % self.N_prom:
                raise ConfigError("N must be a multiple of N_prom")
            if len(self.prompts) < self.N // self.N_prom:
                raise ConfigError("fewer prompts than N / N_prom segments")


_FIELDS = {f.name for f in fields(SchedulerConfig)}

PRESETS = {
    # Hyperparameters of the two published model presets.
    "videocrafter2-like": dict(T=64, f0=16, L_zig=4, e=10, delta_adju=0.01, m_guid=6),
    "wan-like": dict(T=54, f0=21, L_zig=7, e=10, delta_adju=0.01, m_guid=4),
}


def preset(name: str, **overrides) -> SchedulerConfig:
    if name not in PRESETS:
        raise ConfigError(f"unknown preset {name!r}; have {sorted(PRESETS)}")
    return SchedulerConfig(**{**PRESETS[name], **overrides})


def parse_config(text: str) -> SchedulerConfig:
    """Parse the flat key-value config document."""
    values: dict = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise FormatError(f"config line {lineno}: expected 'key = value'")
        key, _, val = line.partition("=")
        key, val = key.strip(), val.strip()
        if key not in _FIELDS:
            raise FormatError(f"config line {lineno}: unknown key {key!r}")
        if key in values:
            raise FormatError(f"config line {lineno}: duplicate key {key!r}")
        try:
            values[key] = json.loads(val)
        except json.JSONDecodeError as exc:
            raise FormatError(f"config line {lineno}: bad value for {key!r}: {exc}") from exc
    try:
        return SchedulerConfig(**values)
    except TypeError as exc:
        raise FormatError(str(exc)) from exc


def load_config(path: str | Path) -> SchedulerConfig:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise FormatError(f"cannot read config {path}: {exc}") from exc
    return parse_config(text)


def dump_config(config: SchedulerConfig) -> str:
    lines = []
    for f in fields(SchedulerConfig):
        lines.append(f"{f.name} = {json.dumps(getattr(config, f.name))}")
    return "\n".join(lines) + "\n"


def with_overrides(config: SchedulerConfig, **overrides) -> SchedulerConfig:
    overrides = {k: v for k, v in overrides.items() if v is not None}
    return replace(config, **overrides)
