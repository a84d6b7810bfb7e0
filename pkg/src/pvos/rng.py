"""SplitMix64 pseudo-random generator.

Chosen over numpy's generators because the algorithm is three lines with
published constants, so scenario goldens can be reproduced in any language.
"""

from __future__ import annotations

import zlib

_MASK = (1 << 64) - 1
_GAMMA = 0x9E3779B97F4A7C15


def _mix(z: int) -> int:
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK
    return z ^ (z >> 31)


def _key(k: int | str) -> int:
    if isinstance(k, str):
        return zlib.crc32(k.encode("utf-8"))
    return int(k) & _MASK


class SplitMix64:
    def __init__(self, seed: int) -> None:
        self.state = int(seed) & _MASK

    @classmethod
    def stream(cls, seed: int, *keys: int | str) -> "SplitMix64":
        """Independent generator derived from ``seed`` and a tuple of keys.

        Used for stateless per-frame draws: the same (seed, keys) always
        yields the same sequence regardless of call order.
        """
        state = int(seed) & _MASK
        for k in keys:
            state = _mix((state + _GAMMA + _key(k)) & _MASK)
        return cls(state)

    def next_u64(self) -> int:
        self.state = (self.state + _GAMMA) & _MASK
        return _mix(self.state)

    def random(self) -> float:
        """Uniform float in [0, 1) with 53 bits of precision."""
        return (self.next_u64() >> 11) * (1.0 / (1 << 53))

    def uniform(self, low: float, high: float) -> float:
        return low + (high - low) * self.random()
