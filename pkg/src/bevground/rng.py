"""Seeded, platform-independent weight initialization.

All learnable-looking parameters in the toolkit (adapters, projection MLPs,
fuser attention weights, box head, toy LM) are regenerated on demand from an
integer seed through a splitmix64 stream. splitmix64 is counter-based, so the
stream vectorizes cleanly in uint64 arithmetic and produces bit-identical
float64 values on every platform, which is what the byte-determinism
contracts rely on.
"""

from __future__ import annotations

import numpy as np

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_MIX1 = np.uint64(0xBF58476D1CE4E5B9)
_MIX2 = np.uint64(0x94D049BB133111EB)
_U64_SCALE = float(2**64)


def _mix(x: np.ndarray) -> np.ndarray:
    x = (x ^ (x >> np.uint64(30))) * _MIX1
    x = (x ^ (x >> np.uint64(27))) * _MIX2
    return x ^ (x >> np.uint64(31))


def mix64(value: int) -> int:
    """One splitmix64 finalizer step; used to derive child seeds."""
    with np.errstate(over="ignore"):
        out = _mix(np.uint64(value & 0xFFFFFFFFFFFFFFFF) + _GOLDEN)
    return int(out)


class SplitMix64:
    """Sequential splitmix64 stream yielding float64 arrays.

    Successive calls consume successive counters, so the full weight layout
    of a model is a pure function of (seed, order of draws).
    """

    def __init__(self, seed: int):
        self._seed = np.uint64(seed & 0xFFFFFFFFFFFFFFFF)
        self._counter = 0

    def uniform(self, shape: tuple[int, ...], low: float = -0.1, high: float = 0.1) -> np.ndarray:
        n = int(np.prod(shape)) if shape else 1
        idx = np.arange(self._counter + 1, self._counter + n + 1, dtype=np.uint64)
        self._counter += n
        with np.errstate(over="ignore"):
            raw = _mix(self._seed + idx * _GOLDEN)
        unit = raw.astype(np.float64) / _U64_SCALE
        return (low + (high - low) * unit).reshape(shape)


def child_seed(seed: int, index: int) -> int:
    """Stable per-item sub-seed for fan-out work (one stream per prompt)."""
    return mix64((seed & 0xFFFFFFFFFFFFFFFF) ^ mix64(index))
