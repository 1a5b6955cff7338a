"""Exception taxonomy for the latent-queue engine.

Every error raised by the engine derives from LqeError so callers (and the
CLI) can map failures to exit codes without string matching.
"""


class LqeError(Exception):
    """Base class for all engine errors."""


class ParameterError(LqeError):
    """Invalid scalar argument (bad bounds, wrong sign, ...)."""


class ConfigError(LqeError):
    """Invalid or inconsistent run configuration."""


class OrderingError(LqeError):
    """Timestep ordering violated (e.g. noising downward)."""


class ShapeError(LqeError):
    """Array shape mismatch between aligned inputs."""


class SizeError(LqeError):
    """Container has the wrong number of elements."""


class StateError(LqeError):
    """Operation not valid for the current queue/engine state."""


class IndexErrorLqe(LqeError):
    """Out-of-range window or frame index."""


class FormatError(LqeError):
    """Malformed on-disk artifact (config, latent file, trace)."""


class DegenerateInputError(LqeError):
    """Numerically degenerate input (e.g. zero-norm pooled vector)."""


class UndefinedSignal(LqeError):
    """A quantity is mathematically undefined for this input.

    Raised (rather than returning NaN) where silence would hide a bug; ratio
    helpers with zero denominators return None instead of raising.
    """
