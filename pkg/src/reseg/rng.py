"""Portable deterministic random stream (SplitMix64).

Every seeded draw in the engine (prompt variants, synthetic checkpoints,
Voronoi rasters) goes through this stream so results are bit-identical
across platforms and independent implementations. The algorithm is the
standard SplitMix64 generator:

    state += 0x9E3779B97F4A7C15
    z = state
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9
    z = (z ^ (z >> 27)) * 0x94D049BB133111EB
    output = z ^ (z >> 31)

all in 64-bit wrapping arithmetic. Bounded draws use the multiply-shift
method, floats take the top 24 bits, so no modulo bias or float rounding
ambiguity enters.
"""

from __future__ import annotations

_MASK64 = (1 << 64) - 1
_GAMMA = 0x9E3779B97F4A7C15


def mix64(z: int) -> int:
    """SplitMix64 finalizer: one avalanche pass over a 64-bit value."""
    z &= _MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return z ^ (z >> 31)


class SplitMix64:
    """Sequential SplitMix64 stream over a 64-bit state."""

    def __init__(self, seed: int):
        self._state = seed & _MASK64

    def next_u64(self) -> int:
        self._state = (self._state + _GAMMA) & _MASK64
        return mix64(self._state)

    def next_index(self, n: int) -> int:
        """Uniform draw from range(n) via multiply-shift (no modulo bias)."""
        if n <= 0:
            raise ValueError(f"next_index needs n >= 1, got {n}")
        return (self.next_u64() * n) >> 64

    def next_float(self) -> float:
        """Uniform in [0, 1) with a 24-bit mantissa (exact as float32)."""
        return (self.next_u64() >> 40) / float(1 << 24)

    def fork(self, tag: int) -> "SplitMix64":
        """Independent substream derived from this stream's state and a tag."""
        return SplitMix64(substream_seed(self._state, tag))


def substream_seed(seed: int, tag: int) -> int:
    """Derive a decorrelated 64-bit seed from a base seed and a tag."""
    return mix64((seed & _MASK64) ^ mix64(tag))
