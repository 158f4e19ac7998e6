"""Counter-based SplitMix64 generator.

Every synthetic image is derived from this generator so that a seed means
the same thing on any platform: output ``i`` of a stream seeded with ``s``
is ``mix(s + (i + 1) * GOLDEN)``, where ``mix`` is the standard SplitMix64
finalizer. Draws are vectorised over numpy ``uint64`` arrays (wrap-around
arithmetic is the intended behaviour).
"""

import numpy as np

GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_MASK = (1 << 64) - 1


def _mix(z):
    z = (z ^ (z >> np.uint64(30))) * _M1
    z = (z ^ (z >> np.uint64(27))) * _M2
    return z ^ (z >> np.uint64(31))


class SplitMix64:
    """Deterministic 64-bit stream with a few convenience samplers.

    Parameters
    ----------
    seed : int
        Any Python integer; reduced modulo 2**64.
    """

    def __init__(self, seed: int):
        self.state = int(seed) & _MASK
        self.counter = 0

    def next_u64(self, n: int) -> np.ndarray:
        idx = np.arange(self.counter + 1, self.counter + 1 + n, dtype=np.uint64)
        self.counter += n
        with np.errstate(over="ignore"):
            z = np.uint64(self.state) + idx * GOLDEN
            return _mix(z)

    def random(self, n: int = 1) -> np.ndarray:
        """Uniform floats in [0, 1) with 53 bits of resolution."""
        return (self.next_u64(n) >> np.uint64(11)).astype(np.float64) * 2.0**-53

    def uniform(self, low: float, high: float, n: int = 1) -> np.ndarray:
        return low + (high - low) * self.random(n)

    def integers(self, low: int, high: int, n: int = 1) -> np.ndarray:
        """Integers in [low, high)."""
        span = high - low
        if span <= 0:
            raise ValueError("empty integer range")
        return low + np.floor(self.random(n) * span).astype(np.int64)

    def normal(self, n: int = 1, loc: float = 0.0, scale: float = 1.0) -> np.ndarray:
        # Box-Muller; 1 - u keeps the log argument away from zero
        m = (n + 1) // 2
        u1 = 1.0 - self.random(m)
        u2 = self.random(m)
        r = np.sqrt(-2.0 * np.log(u1))
        z = np.concatenate([r * np.cos(2 * np.pi * u2), r * np.sin(2 * np.pi * u2)])
        return loc + scale * z[:n]

    def permutation(self, n: int) -> np.ndarray:
        # stable argsort of random keys is a portable shuffle
        return np.argsort(self.random(n), kind="stable")

    def spawn(self, tag: int) -> "SplitMix64":
        """Independent child stream, keyed by ``tag``."""
        with np.errstate(over="ignore"):
            child = _mix(np.uint64(self.state) ^ _mix(np.uint64(tag & _MASK) + GOLDEN))
        return SplitMix64(int(child))
