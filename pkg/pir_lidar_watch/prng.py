"""PCG-XSH-RR 32-bit generator.

Every random draw in the simulator comes from here so a seed gives the same trace on every
platform and Python version. The host `random` module is never used.
"""

from __future__ import annotations

import math
from collections.abc import Sequence
from typing import TypeVar

_MULTIPLIER: int = 6364136223846793005
_INCREMENT: int = 1442695040888963407
_MASK64: int = 0xFFFFFFFFFFFFFFFF
_MASK32: int = 0xFFFFFFFF

T = TypeVar("T")


class Pcg32:
    def __init__(self: Pcg32, seed: int) -> None:
        self.state: int = 0
        self._step()
        self.state = (self.state + (seed & _MASK64)) & _MASK64
        self._step()

    def _step(self: Pcg32) -> None:
        self.state = (self.state * _MULTIPLIER + _INCREMENT) & _MASK64

    def next_u32(self: Pcg32) -> int:
        old: int = self.state
        self._step()
        xorshifted: int = (((old >> 18) ^ old) >> 27) & _MASK32
        rot: int = old >> 59
        return ((xorshifted >> rot) | (xorshifted << ((-rot) & 31))) & _MASK32

    def uniform(self: Pcg32) -> float:
        """Get a float in [0, 1)."""
        return self.next_u32() / 2**32

    def bounded(self: Pcg32, low: int, high: int) -> int:
        """Get an integer in [low, high], both inclusive, without modulo bias."""
        if high < low:
            msg: str = f"Empty range [{low}, {high}]"
            raise ValueError(msg)

        span: int = high - low + 1
        limit: int = (2**32 // span) * span
        while True:
            value = self.next_u32()
            if value < limit:
                return low + value % span

    def chance(self: Pcg32, probability: float) -> bool:
        return self.uniform() < probability

    def gauss(self: Pcg32, sigma: float) -> float:
        """Get a normal variate with mean 0 (Box-Muller, one variate per call)."""
        u1: float = 1.0 - self.uniform()  # (0, 1], keeps log() finite
        u2: float = self.uniform()
        return sigma * math.sqrt(-2.0 * math.log(u1)) * math.cos(2.0 * math.pi * u2)

    def choice(self: Pcg32, options: Sequence[T]) -> T:
        return options[self.bounded(0, len(options) - 1)]
