"""Deterministic random-stream derivation for replicate-level work.

Every randomized operation takes a master seed and derives one child stream
per unit of work (bootstrap replicate, CV split, prediction replicate) from
``SeedSequence(seed, spawn_key=key)``. Child streams depend only on the seed
and the key, never on execution order, so results are identical for any
worker count.
"""
from __future__ import annotations

import numpy as np


def derive_rng(seed: int, *key: int) -> np.random.Generator:
    """Generator for child stream ``key`` of master ``seed``."""
    ss = np.random.SeedSequence(int(seed), spawn_key=tuple(int(k) for k in key))
    return np.random.default_rng(ss)


def derive_seed(seed: int, *key: int) -> int:
    """Integer seed for child stream ``key`` (for nested seeded calls)."""
    ss = np.random.SeedSequence(int(seed), spawn_key=tuple(int(k) for k in key))
    return int(ss.generate_state(1, dtype=np.uint64)[0])
