"""Seed derivation: every random stream comes from one master seed."""
from __future__ import annotations

import hashlib

import numpy as np


def component_key(name: str) -> int:
    return int.from_bytes(hashlib.sha256(name.encode()).digest()[:8], "little")


def derive_rng(seed: int, component: str, *ids: int) -> np.random.Generator:
    """Generator for ``component`` (and optional sub-ids such as a domain index)."""
    entropy = [int(seed) & (2**64 - 1), component_key(component), *(int(i) for i in ids)]
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(entropy)))


def as_rng(rng) -> np.random.Generator:
    if isinstance(rng, np.random.Generator):
        return rng
    return np.random.default_rng(rng)
