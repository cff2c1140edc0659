"""Deterministic seed derivation.

Every random decision in the pipeline draws from a generator derived from
the single root seed plus a component scope, so individual stages (k-means,
init, one training epoch, ...) are reproducible in isolation.
"""

from __future__ import annotations

import hashlib

import numpy as np


def derive_seed(root_seed: int, *scope: str | int) -> int:
    """Map (root seed, scope path) to a stable 64-bit seed."""
    payload = repr((int(root_seed),) + tuple(scope)).encode("utf-8")
    digest = hashlib.sha256(payload).digest()
    return int.from_bytes(digest[:8], "little")


def rng_for(root_seed: int, *scope: str | int) -> np.random.Generator:
    """Generator seeded from the root seed and a component scope."""
    return np.random.default_rng(derive_seed(root_seed, *scope))
