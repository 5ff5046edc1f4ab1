"""Seed derivation: every random stream is a pure function of the root seed and a label path."""

from __future__ import annotations

import zlib

import numpy as np


def _key(label) -> int:
    if isinstance(label, (int, np.integer)):
        return int(label)
    return zlib.crc32(str(label).encode("utf-8"))


def derive_seed(root: int, *labels) -> np.random.SeedSequence:
    return np.random.SeedSequence(entropy=int(root), spawn_key=tuple(_key(l) for l in labels))


def derive_rng(root: int, *labels) -> np.random.Generator:
    """``derive_rng(seed, "mcmc", i, j)`` always yields the same stream."""
    return np.random.default_rng(derive_seed(root, *labels))
