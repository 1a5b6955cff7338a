"""Counter-based seeded noise streams.

Every random draw in the engine is keyed by (seed, frame_index, tag) so that
the noise attached to a frame never depends on enqueue order, mode, or how
many draws happened before it.  Two runs with the same config and seed are
bit-identical; candidate searches get distinct tags per candidate.
"""

from __future__ import annotations

import zlib

import numpy as np


def _tag_id(tag: str) -> int:
    return zlib.crc32(tag.encode("utf-8"))


def stream(seed: int, frame_index: int, tag: str) -> np.random.Generator:
    """Return the generator for one (seed, frame, purpose) key.

    The same key always yields the same stream, independent of call order.
    """
    ss = np.random.SeedSequence(entropy=seed, spawn_key=(frame_index, _tag_id(tag)))
    return np.random.Generator(np.random.Philox(ss))


def normal(seed: int, frame_index: int, tag: str, shape) -> np.ndarray:
    """Standard-normal float32 draw for one keyed stream."""
    return stream(seed, frame_index, tag).standard_normal(shape, dtype=np.float32)


def uniform(seed: int, frame_index: int, tag: str) -> float:
    """Single uniform [0, 1) draw for one keyed stream."""
    return float(stream(seed, frame_index, tag).random())
