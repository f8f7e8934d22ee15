"""Deterministic random streams keyed by (seed, cell, replicate)."""

from __future__ import annotations

import os
import zlib

import numpy as np

DEFAULT_SEED = 20240101


def _key(part) -> int:
    if isinstance(part, (int, np.integer)):
        return int(part) & 0xFFFFFFFF
    return zlib.crc32(str(part).encode())


def stream(seed: int, *keys) -> np.random.Generator:
    """Independent generator for ``(seed, *keys)``.

    String keys are hashed with CRC32 so cell labels can be used directly.
    The result does not depend on which worker or in what order it is built.
    """
    entropy = [int(seed) & 0xFFFFFFFFFFFFFFFF] + [_key(k) for k in keys]
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(entropy)))


def thread_count(default: int | None = None) -> int:
    """Worker cap from ``CHISQALT_THREADS`` (falls back to the CPU count)."""
    raw = os.environ.get("CHISQALT_THREADS")
    if raw:
        try:
            return max(1, int(raw))
        except ValueError:
            pass
    return default or os.cpu_count() or 1
