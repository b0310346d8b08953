"""Deterministic seeding and counter-based randomness.

Every random choice in the package flows either through a numpy Generator
seeded with :func:`fold_seed`, or through :func:`uniform_hash`, a stateless
hash of integer coordinates.  Both are pure functions of their inputs, so
identical configurations produce bit-identical runs on any platform.
"""

from __future__ import annotations

import numpy as np

_GOLDEN = 0x9E3779B97F4A7C15
_MIX1 = 0xBF58476D1CE4E5B9
_MIX2 = 0x94D049BB133111EB
_MASK64 = (1 << 64) - 1


def _mix64(x: int) -> int:
    # splitmix64 finaliser
    x &= _MASK64
    x ^= x >> 30
    x = (x * _MIX1) & _MASK64
    x ^= x >> 27
    x = (x * _MIX2) & _MASK64
    x ^= x >> 31
    return x


def fold_seed(*parts: int) -> int:
    """Fold any number of integers into a single 64-bit seed.

    Order matters: fold_seed(1, 2) != fold_seed(2, 1).
    """
    state = 0
    for part in parts:
        state = _mix64((state + _GOLDEN + (int(part) & _MASK64)) & _MASK64)
    return state


def uniform_hash(seed: int, tag: int, row_ids, n_cols: int) -> np.ndarray:
    """Uniforms in [0, 1), one per (row id, column) pair.

    The value at (i, j) depends only on ``(seed, tag, row_ids[i], j)`` —
    never on the batch shape — so hashing a subset of rows reproduces
    exactly the rows that subset would receive inside a larger batch.
    Returns an array of shape ``(len(row_ids), n_cols)``.
    """
    base = np.uint64(fold_seed(seed, tag))
    rows = np.asarray(row_ids, dtype=np.uint64).reshape(-1, 1)
    cols = np.arange(n_cols, dtype=np.uint64).reshape(1, -1)
    x = base + rows * np.uint64(_MIX1) + cols * np.uint64(_GOLDEN)
    x = x ^ (x >> np.uint64(30))
    x = x * np.uint64(_MIX1)
    x = x ^ (x >> np.uint64(27))
    x = x * np.uint64(_MIX2)
    x = x ^ (x >> np.uint64(31))
    # top 53 bits -> float64 in [0, 1)
    return (x >> np.uint64(11)).astype(np.float64) * (2.0 ** -53)
