"""Deterministic seed derivation and portable random streams.

Every stochastic component draws from a counter-based Philox stream keyed by
a SplitMix64-derived seed, so datasets, forests, and CNN weights are
bit-reproducible across platforms and across parallel execution orders.
"""

from __future__ import annotations

import numpy as np

_MASK64 = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15


def splitmix64(state: int) -> int:
    """One SplitMix64 output step for a 64-bit state."""
    z = (state + _GOLDEN) & _MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return (z ^ (z >> 31)) & _MASK64


def _token_to_int(token: int | str) -> int:
    if isinstance(token, str):
        # Fold UTF-8 bytes through the mixer; stable across platforms.
        acc = 0x243F6A8885A308D3
        for b in token.encode("utf-8"):
            acc = splitmix64(acc ^ b)
        return acc
    return int(token) & _MASK64


def derive_seed(master: int, *tokens: int | str) -> int:
    """Derive a child seed from a master seed and a token path."""
    state = splitmix64(int(master) & _MASK64)
    for token in tokens:
        state = splitmix64(state ^ _token_to_int(token))
    return state


def make_generator(seed: int) -> np.random.Generator:
    """Philox generator for the given 64-bit seed (same stream everywhere)."""
    return np.random.Generator(np.random.Philox(key=seed & _MASK64))
