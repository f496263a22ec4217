"""Seed handling: every stochastic stream is derived from one 64-bit seed."""

import numpy as np

_MASK64 = (1 << 64) - 1


def as_u64(seed: int) -> int:
    """Map any (possibly negative) integer seed onto [0, 2**64)."""
    return int(seed) & _MASK64


def derive_seed(seed: int, *keys: int) -> int:
    """Deterministically derive an independent child seed from ``seed``."""
    ss = np.random.SeedSequence(as_u64(seed), spawn_key=tuple(int(k) for k in keys))
    return int(ss.generate_state(1, np.uint64)[0])


def make_rng(seed: int, *keys: int) -> np.random.Generator:
    if keys:
        return np.random.default_rng(np.random.SeedSequence(as_u64(seed), spawn_key=keys))
    return np.random.default_rng(as_u64(seed))
