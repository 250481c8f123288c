"""Deterministic seed derivation.

Everything stochastic in the toolkit takes an explicit integer seed and
derives independent streams from it, so results are reproducible across
runs, platforms, and execution order.
"""

from __future__ import annotations

import hashlib

_MASK64 = (1 << 64) - 1


def splitmix64(seed: int):
    """Yield an endless sequence of 64-bit values from `seed` (splitmix64)."""
    state = seed & _MASK64
    while True:
        state = (state + 0x9E3779B97F4A7C15) & _MASK64
        z = state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
        yield z ^ (z >> 31)


def derive_seed(seed: int, *tokens: str) -> int:
    """Stable 63-bit sub-seed for a named stream, e.g. one per processor."""
    h = hashlib.sha256(str(int(seed)).encode())
    for token in tokens:
        h.update(b"/")
        h.update(token.encode())
    return int.from_bytes(h.digest()[:8], "little") & ((1 << 63) - 1)
