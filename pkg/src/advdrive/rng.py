"""Counter-based 64-bit pseudo-random generator with explicit, serializable state.

The whole sandbox depends on bit-exact replay: the generator state is a single
u64 counter that lives inside world/scenario state and survives JSON
round-trips. The mixing function is SplitMix64, which is stateless apart from
the counter, so two generators with equal counters produce equal streams on
any platform.
"""

from __future__ import annotations

import math

_MASK64 = (1 << 64) - 1
_GAMMA = 0x9E3779B97F4A7C15


def _mix(z: int) -> int:
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return z ^ (z >> 31)


class Rng:
    """SplitMix64 stream; `state` is the counter *before* the next draw."""

    __slots__ = ("state",)

    def __init__(self, seed: int = 0):
        self.state = seed & _MASK64

    def next_u64(self) -> int:
        self.state = (self.state + _GAMMA) & _MASK64
        return _mix(self.state)

    def uniform(self, lo: float = 0.0, hi: float = 1.0) -> float:
        # 53 mantissa bits -> uniform in [0, 1)
        u = (self.next_u64() >> 11) / float(1 << 53)
        return lo + (hi - lo) * u

    def normal(self, mu: float = 0.0, sigma: float = 1.0) -> float:
        # Box-Muller, first branch only; keeps the state a pure counter.
        u1 = (self.next_u64() >> 11) / float(1 << 53)
        u2 = (self.next_u64() >> 11) / float(1 << 53)
        r = math.sqrt(-2.0 * math.log(1.0 - u1))
        return mu + sigma * r * math.cos(2.0 * math.pi * u2)

    def randint(self, n: int) -> int:
        """Uniform integer in [0, n). Modulo bias is negligible for n << 2^64."""
        if n <= 0:
            raise ValueError("randint needs n >= 1")
        return self.next_u64() % n

    def choice(self, seq):
        return seq[self.randint(len(seq))]

    def split(self) -> "Rng":
        """Derive an independent child stream (e.g. per episode, per attack)."""
        return Rng(self.next_u64())

    def copy(self) -> "Rng":
        return Rng(self.state)

    def __eq__(self, other) -> bool:
        return isinstance(other, Rng) and other.state == self.state

    def __repr__(self) -> str:
        return f"Rng(0x{self.state:016x})"


def derive_seed(seed: int, *salts: int) -> int:
    """Stable seed derivation for sub-streams (tick-local attack noise etc.)."""
    z = seed & _MASK64
    for s in salts:
        z = _mix((z ^ (s & _MASK64)) + _GAMMA & _MASK64)
    return z
