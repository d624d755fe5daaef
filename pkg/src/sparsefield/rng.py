"""Portable seeded normals: SplitMix64 feeding Box-Muller.

The stream is fully specified so other implementations can reproduce it:

* output ``i`` (0-based) of SplitMix64 seeded with ``s`` is
  ``mix(s + (i + 1) * 0x9E3779B97F4A7C15 mod 2**64)`` where ``mix`` is the
  standard SplitMix64 finalizer (xor-shift 30/27/31 with multipliers
  ``0xBF58476D1CE4E5B9`` and ``0x94D049BB133111EB``);
* each output becomes a uniform ``u = (x >> 11) * 2**-53`` in ``[0, 1)``;
* consecutive uniforms ``(u_a, u_b)`` give
  ``r = sqrt(-2 ln(1 - u_a))`` and the normals ``r cos(2 pi u_b)``,
  ``r sin(2 pi u_b)``, in that order.
"""

from __future__ import annotations

import numpy as np

GOLDEN_GAMMA = 0x9E3779B97F4A7C15
_MASK64 = (1 << 64) - 1


class SplitMix64:
    """Scalar reference generator."""

    def __init__(self, seed: int):
        self.state = seed & _MASK64

    def next(self) -> int:
        self.state = (self.state + GOLDEN_GAMMA) & _MASK64
        z = self.state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
        return z ^ (z >> 31)


def splitmix64(seed: int, count: int, offset: int = 0) -> np.ndarray:
    """Outputs ``offset .. offset+count-1`` of the stream, vectorized."""
    idx = np.arange(offset + 1, offset + count + 1, dtype=np.uint64)
    z = np.uint64(seed & _MASK64) + idx * np.uint64(GOLDEN_GAMMA)
    z = (z ^ (z >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
    z = (z ^ (z >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
    return z ^ (z >> np.uint64(31))


def uniforms(seed: int, count: int) -> np.ndarray:
    x = splitmix64(seed, count)
    return (x >> np.uint64(11)).astype(np.float64) * 2.0**-53


def standard_normals(seed: int, count: int) -> np.ndarray:
    pairs = (count + 1) // 2
    u = uniforms(seed, 2 * pairs).reshape(pairs, 2)
    r = np.sqrt(-2.0 * np.log1p(-u[:, 0]))
    theta = 2.0 * np.pi * u[:, 1]
    out = np.empty((pairs, 2))
    out[:, 0] = r * np.cos(theta)
    out[:, 1] = r * np.sin(theta)
    return out.reshape(-1)[:count]
