"""Seed derivation.

Every random stream is keyed by the master seed plus a path of names and
indices, e.g. ``("epoch", 4, "attack", 2)``. Paths are mapped onto numpy's
``SeedSequence`` spawn keys, so streams are independent and stable across
runs and platforms.
"""
from __future__ import annotations

import zlib

import numpy as np

__all__ = ["derive_seed", "generator"]


def _key(path):
    out = []
    for part in path:
        if isinstance(part, (int, np.integer)):
            out.append(int(part) & 0xFFFFFFFF)
        else:
            out.append(zlib.crc32(str(part).encode("utf-8")))
    return tuple(out)


def _sequence(seed, path):
    return np.random.SeedSequence(entropy=int(seed) & (2**64 - 1), spawn_key=_key(path))


def derive_seed(seed, *path):
    """A 63-bit integer seed for the stream ``path`` under ``seed``."""
    return int(_sequence(seed, path).generate_state(1, dtype=np.uint64)[0] >> np.uint64(1))


def generator(seed, *path):
    """A PCG64 generator for the stream ``path`` under ``seed``."""
    return np.random.Generator(np.random.PCG64(_sequence(seed, path)))
