"""The "MIGL" latent binary format.

Layout: magic b"MIGL", version u32 LE, then N, l, d as u32 LE, then
N * l * d float32 LE values (frame-major).
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .errors import FormatError

MAGIC = b"MIGL"
VERSION = 1
_HEADER = struct.Struct("<4sIIII")


def write_latents(path: str | Path, frames: np.ndarray) -> None:
    """Write an (N, l, d) float32 array to `path`."""
    frames = np.ascontiguousarray(frames, dtype="<f4")
    if frames.ndim != 3:
        raise FormatError(f"expected (N, l, d) array, got shape {frames.shape}")
    n, l, d = frames.shape
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, VERSION, n, l, d))
        fh.write(frames.tobytes())


def read_latents(path: str | Path) -> np.ndarray:
    """Read a latent file back into an (N, l, d) float32 array."""
    path = Path(path)
    blob = path.read_bytes()
    if len(blob) < _HEADER.size:
        raise FormatError(f"{path}: truncated header at offset {len(blob)}")
    magic, version, n, l, d = _HEADER.unpack_from(blob)
    if magic != MAGIC:
        raise FormatError(f"{path}: bad magic {magic!r} at offset 0")
    if version != VERSION:
        raise FormatError(f"{path}: unsupported version {version} at offset 4")
    expected = _HEADER.size + 4 * n * l * d
    if len(blob) != expected:
        raise FormatError(
            f"{path}: payload length {len(blob) - _HEADER.size} at offset "
            f"{_HEADER.size}, expected {expected - _HEADER.size}"
        )
    data = np.frombuffer(blob, dtype="<f4", offset=_HEADER.size)
    return data.reshape(n, l, d).copy()
