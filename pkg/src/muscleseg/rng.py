"""Counter-based random numbers keyed by (seed, stream, index).

Every draw is a pure function of its key, so a voxel's noise does not depend
on how many voxels were generated before it or in which order blocks were
processed. The mixer is SplitMix64's finalizer applied to a combined key.
"""
from __future__ import annotations

import numpy as np

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_MASK64 = (1 << 64) - 1


def _mix(z: np.ndarray) -> np.ndarray:
    z = z.copy()
    z ^= z >> np.uint64(30)
    z *= _M1
    z ^= z >> np.uint64(27)
    z *= _M2
    z ^= z >> np.uint64(31)
    return z


def derive_seed(seed: int, *labels: int) -> int:
    """Derive a child seed from ``seed`` and integer labels (e.g. case, model)."""
    key = np.array([seed & _MASK64], dtype=np.uint64)
    with np.errstate(over="ignore"):
        for label in labels:
            tag = np.array([int(label) & _MASK64], dtype=np.uint64)
            key = _mix(key ^ _mix(tag * _GOLDEN + _GOLDEN))
    return int(key[0])


def random_bits(seed: int, stream: int, index: np.ndarray) -> np.ndarray:
    """64 random bits per counter in ``index``."""
    index = np.asarray(index, dtype=np.uint64)
    with np.errstate(over="ignore"):
        key = derive_seed(seed, stream)
        return _mix(np.uint64(key) + (index + np.uint64(1)) * _GOLDEN)


def uniform(seed: int, stream: int, index: np.ndarray) -> np.ndarray:
    """Uniform draws on the open interval (0, 1), 53 bits of resolution."""
    bits = random_bits(seed, stream, index) >> np.uint64(11)
    return (bits.astype(np.float64) + 0.5) / float(1 << 53)


def normal(seed: int, stream: int, n: int) -> np.ndarray:
    """``n`` standard normal draws for counters ``0..n-1`` (Box-Muller)."""
    idx = np.arange(n, dtype=np.uint64)
    u1 = uniform(seed, stream, 2 * idx)
    u2 = uniform(seed, stream, 2 * idx + np.uint64(1))
    return np.sqrt(-2.0 * np.log(u1)) * np.cos(2.0 * np.pi * u2)


class CounterRNG:
    """Scalar convenience draws for small, order-free choices (metadata, layout)."""

    def __init__(self, seed: int, stream: int = 0):
        self.seed = int(seed)
        self.stream = int(stream)

    def uniform(self, key: int, low: float = 0.0, high: float = 1.0) -> float:
        u = float(uniform(self.seed, self.stream, np.array([key]))[0])
        return low + (high - low) * u

    def integer(self, key: int, low: int, high: int) -> int:
        """Integer in ``[low, high]`` inclusive."""
        return low + int(self.uniform(key) * (high - low + 1))

    def choice(self, key: int, options, weights=None):
        u = self.uniform(key)
        if weights is None:
            return options[int(u * len(options))]
        total = float(sum(weights))
        acc = 0.0
        for option, w in zip(options, weights):
            acc += w / total
            if u < acc:
                return option
        return options[-1]
