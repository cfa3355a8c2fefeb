"""Deterministic 64-bit PRNG shared by every execution backend.

Splitmix-style mixing with fixed constants; uniform doubles come from the
top 53 bits. The C runtime header implements the identical transition, so
interpreter runs, residual runs and compiled programs can be compared
bit-for-bit on the same seed.
"""

from __future__ import annotations

MASK = (1 << 64) - 1
GAMMA = 0x9E3779B97F4A7C15
MIX1 = 0xBF58476D1CE4E5B9
MIX2 = 0x94D049BB133111EB
INV_2_53 = 1.0 / (1 << 53)


class RngState:
    __slots__ = ("state", "draws")

    def __init__(self, seed: int):
        self.state = seed & MASK
        self.draws = 0

    def next_u64(self) -> int:
        s = (self.state + GAMMA) & MASK
        self.state = s
        z = ((s ^ (s >> 30)) * MIX1) & MASK
        z = ((z ^ (z >> 27)) * MIX2) & MASK
        self.draws += 1
        return z ^ (z >> 31)

    def uniform(self) -> float:
        """Uniform double in [0, 1) from the top 53 bits of one draw."""
        return (self.next_u64() >> 11) * INV_2_53

    def flip(self, p: float) -> bool:
        if not 0.0 <= p <= 1.0:
            from .errors import DslRuntimeError
            raise DslRuntimeError(f"flip probability {p!r} outside [0, 1]")
        return self.uniform() < p

    def random_index(self, k: int) -> int:
        """Uniform integer in [0, k); consumes exactly one draw."""
        if k <= 0:
            from .errors import DslRuntimeError
            raise DslRuntimeError(f"random-index bound must be positive, got {k!r}")
        return int(self.uniform() * k)
